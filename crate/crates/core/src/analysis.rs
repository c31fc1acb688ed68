//! Error reports, holdout-generalization studies, the penalty ablation,
//! contour grids, and synthetic-surface generation.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::AggregatedPoint;
use crate::error::{Error, Result};
use crate::model::{eval_scaling_law, PenaltyConfig, ScalingParams};
use crate::optimize::{fit, FitConfig, FitResult};

/// Mean absolute prediction error of `params` over `points`.
pub fn mean_abs_error(
    params: &ScalingParams,
    penalty: &PenaltyConfig,
    points: &[AggregatedPoint],
) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyInput("points"));
    }
    let mut acc = 0.0;
    for p in points {
        let predicted = eval_scaling_law(params, penalty, p.compute, p.n_pmt, p.n_ctx as f64)?;
        acc += (p.metric - predicted).abs();
    }
    Ok(acc / points.len() as f64)
}

/// Partitions points into (n_pmt <= max_n_pmt, n_pmt > max_n_pmt), both in
/// input order.
pub fn holdout_split(
    points: &[AggregatedPoint],
    max_n_pmt: f64,
) -> (Vec<AggregatedPoint>, Vec<AggregatedPoint>) {
    let mut train = Vec::new();
    let mut held_out = Vec::new();
    for p in points {
        if p.n_pmt <= max_n_pmt {
            train.push(p.clone());
        } else {
            held_out.push(p.clone());
        }
    }
    (train, held_out)
}

/// Outcome of a long-prompt extrapolation study: a fit on the short-prompt
/// points and its error on the held-out long-prompt points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutStudy {
    pub threshold: f64,
    pub train_count: usize,
    pub held_out_count: usize,
    pub held_out_mae: f64,
    pub fit: FitResult,
}

/// Refits on the points with `n_pmt <= threshold` only and reports the mean
/// absolute error on the held-out remainder. Held-out points never reach the
/// optimizer.
pub fn context_generalization_study(
    points: &[AggregatedPoint],
    threshold: f64,
    config: &FitConfig,
) -> Result<HoldoutStudy> {
    let (train, held_out) = holdout_split(points, threshold);
    if held_out.is_empty() {
        return Err(Error::EmptyInput(
            "held-out set (threshold is above every point)",
        ));
    }
    let fit_result = fit(&train, config)?;
    let held_out_mae = mean_abs_error(&fit_result.params, &config.penalty, &held_out)?;
    Ok(HoldoutStudy {
        threshold,
        train_count: train.len(),
        held_out_count: held_out.len(),
        held_out_mae,
        fit: fit_result,
    })
}

/// Errors of one ablation arm, split at the context limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationArm {
    pub mae_in_limit: f64,
    pub mae_over_limit: f64,
    pub mae_overall: f64,
}

/// Paired fits with the penalty factor enabled and disabled, with errors
/// reported separately for in-limit (n_pmt <= n_ctx) and over-limit
/// (n_pmt > n_ctx) points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub in_limit_count: usize,
    pub over_limit_count: usize,
    pub penalty_on: AblationArm,
    pub penalty_off: AblationArm,
    pub config_echo: FitConfig,
}

impl AblationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs two full fits (penalty on and off, same seed) and reports the six
/// split errors.
pub fn penalty_ablation(points: &[AggregatedPoint], config: &FitConfig) -> Result<AblationReport> {
    let in_limit: Vec<AggregatedPoint> = points
        .iter()
        .filter(|p| p.n_pmt <= p.n_ctx as f64)
        .cloned()
        .collect();
    let over_limit: Vec<AggregatedPoint> = points
        .iter()
        .filter(|p| p.n_pmt > p.n_ctx as f64)
        .cloned()
        .collect();
    if over_limit.is_empty() {
        return Err(Error::EmptyInput("over-limit points (n_pmt > n_ctx)"));
    }
    if in_limit.is_empty() {
        return Err(Error::EmptyInput("in-limit points (n_pmt <= n_ctx)"));
    }

    let arm = |enabled: bool| -> Result<AblationArm> {
        let mut arm_config = config.clone();
        arm_config.penalty.enabled = enabled;
        let result = fit(points, &arm_config)?;
        Ok(AblationArm {
            mae_in_limit: mean_abs_error(&result.params, &arm_config.penalty, &in_limit)?,
            mae_over_limit: mean_abs_error(&result.params, &arm_config.penalty, &over_limit)?,
            mae_overall: result.mae,
        })
    };

    Ok(AblationReport {
        in_limit_count: in_limit.len(),
        over_limit_count: over_limit.len(),
        penalty_on: arm(true)?,
        penalty_off: arm(false)?,
        config_echo: config.clone(),
    })
}

/// One external observation scored against fixed parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationRow {
    pub model_id: String,
    pub task: String,
    pub compute: f64,
    pub n_ctx: u64,
    pub n_pmt: f64,
    pub observed: f64,
    pub predicted: f64,
    /// observed - predicted
    pub residual: f64,
}

/// Writes predictions next to their source points: the aggregated CSV
/// schema extended with `predicted` and `residual` columns.
pub fn write_prediction_csv<W: Write>(
    writer: W,
    points: &[AggregatedPoint],
    rows: &[GeneralizationRow],
) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        task: &'a str,
        model_id: &'a str,
        #[serde(rename = "C")]
        compute: f64,
        n_pmt: f64,
        n_ctx: u64,
        shots: u32,
        metric: f64,
        count: u64,
        predicted: f64,
        residual: f64,
    }
    let mut wtr = csv::Writer::from_writer(writer);
    for (p, row) in points.iter().zip(rows) {
        wtr.serialize(Row {
            task: &p.task,
            model_id: &p.model_id,
            compute: p.compute,
            n_pmt: p.n_pmt,
            n_ctx: p.n_ctx,
            shots: p.shots,
            metric: p.metric,
            count: p.count,
            predicted: row.predicted,
            residual: row.residual,
        })
        .map_err(|e| Error::Serialize(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Scores external observations against fixed parameters: no refitting, and
/// the same inputs always produce the same rows.
pub fn generalization_report(
    params: &ScalingParams,
    penalty: &PenaltyConfig,
    external_points: &[AggregatedPoint],
) -> Result<Vec<GeneralizationRow>> {
    let mut rows = Vec::with_capacity(external_points.len());
    for p in external_points {
        let predicted = eval_scaling_law(params, penalty, p.compute, p.n_pmt, p.n_ctx as f64)?;
        rows.push(GeneralizationRow {
            model_id: p.model_id.clone(),
            task: p.task.clone(),
            compute: p.compute,
            n_ctx: p.n_ctx,
            n_pmt: p.n_pmt,
            observed: p.metric,
            predicted,
            residual: p.metric - predicted,
        });
    }
    Ok(rows)
}

/// Model predictions over a compute x prompt-length grid at one context
/// limit, with a log-spaced prompt axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourGrid {
    pub c_values: Vec<f64>,
    pub n_ctx: u64,
    pub n_pmt_axis: Vec<f64>,
    /// `values[i][k]` = prediction at (`c_values[i]`, `n_pmt_axis[k]`).
    pub values: Vec<Vec<f64>>,
}

impl ContourGrid {
    /// Long-format CSV: `C,n_pmt,value`, one row per grid cell.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            #[serde(rename = "C")]
            c: f64,
            n_pmt: f64,
            value: f64,
        }
        let mut wtr = csv::Writer::from_writer(writer);
        for (&c, row) in self.c_values.iter().zip(&self.values) {
            for (&n_pmt, &value) in self.n_pmt_axis.iter().zip(row) {
                wtr.serialize(Row { c, n_pmt, value })
                    .map_err(|e| Error::Serialize(e.to_string()))?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Default prompt-axis range for contour emission, in tokens.
pub const DEFAULT_CONTOUR_RANGE: (f64, f64) = (32.0, 262_144.0);

/// Evaluates the scaling law over `c_values` x a log-spaced prompt axis of
/// `resolution` points spanning `n_pmt_range`.
pub fn contour_grid(
    params: &ScalingParams,
    penalty: &PenaltyConfig,
    c_values: &[f64],
    n_ctx: u64,
    n_pmt_range: (f64, f64),
    resolution: usize,
) -> Result<ContourGrid> {
    if c_values.is_empty() {
        return Err(Error::EmptyInput("c_values"));
    }
    if resolution < 2 {
        return Err(Error::Config(format!(
            "resolution = {resolution} must be at least 2"
        )));
    }
    let (lo, hi) = n_pmt_range;
    if !lo.is_finite() || !hi.is_finite() || lo <= 0.0 || hi <= lo {
        return Err(Error::Config(format!(
            "n_pmt range [{lo}, {hi}] must satisfy 0 < lo < hi"
        )));
    }

    let ratio = hi / lo;
    let n_pmt_axis: Vec<f64> = (0..resolution)
        .map(|k| {
            if k + 1 == resolution {
                hi
            } else {
                lo * ratio.powf(k as f64 / (resolution - 1) as f64)
            }
        })
        .collect();

    let mut values = Vec::with_capacity(c_values.len());
    for &c in c_values {
        let mut row = Vec::with_capacity(resolution);
        for &n_pmt in &n_pmt_axis {
            row.push(eval_scaling_law(params, penalty, c, n_pmt, n_ctx as f64)?);
        }
        values.push(row);
    }

    Ok(ContourGrid {
        c_values: c_values.to_vec(),
        n_ctx,
        n_pmt_axis,
        values,
    })
}

/// Draws observations from the scaling law over a (C, n_pmt, n_ctx) design,
/// with optional Gaussian noise, clamped into [0, 1]. Deterministic under
/// the seed.
pub fn synthetic_generate(
    params: &ScalingParams,
    penalty: &PenaltyConfig,
    design: &[(f64, f64, u64)],
    noise_sd: f64,
    seed: u64,
) -> Result<Vec<AggregatedPoint>> {
    if !noise_sd.is_finite() || noise_sd < 0.0 {
        return Err(Error::Domain {
            arg: "noise_sd",
            value: noise_sd,
            reason: "must be finite and nonnegative",
        });
    }
    params.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if noise_sd > 0.0 {
        Some(Normal::new(0.0, noise_sd).expect("validated standard deviation"))
    } else {
        None
    };

    let mut points = Vec::with_capacity(design.len());
    for (idx, &(compute, n_pmt, n_ctx)) in design.iter().enumerate() {
        let mut metric = eval_scaling_law(params, penalty, compute, n_pmt, n_ctx as f64)?;
        if let Some(normal) = &noise {
            metric = (metric + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
        points.push(AggregatedPoint {
            task: "synthetic".to_string(),
            model_id: format!("design-{idx:03}"),
            compute,
            n_pmt,
            n_ctx,
            shots: 0,
            metric,
            count: 1,
        });
    }
    Ok(points)
}
