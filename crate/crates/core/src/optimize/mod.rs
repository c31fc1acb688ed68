//! Two-stage bounded fitting: a global differential-evolution search over
//! the parameter box followed by local least-squares refinement from the
//! champion.
//!
//! `fit` is a pure function of (points, config) including the seed: repeated
//! calls produce bit-identical results.

pub mod de;
pub mod local;

pub use de::{differential_evolution, DeConfig, DeOutcome};
pub use local::{LocalConfig, LocalOutcome};

use serde::{Deserialize, Serialize};

use crate::data::AggregatedPoint;
use crate::error::{Error, Result};
use crate::model::{eval_raw, PenaltyConfig, ScalingParams};

/// Per-parameter closed search intervals, `[lower, upper]` per field.
///
/// Defaults cover the documented search box with the zero lower bounds
/// lifted to small positive epsilons (1 FLOP for the compute scale) so that
/// `(x / scale)^exp` stays finite everywhere in the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamBounds {
    pub compute_coef: [f64; 2],
    pub compute_scale: [f64; 2],
    pub compute_exp: [f64; 2],
    pub context_coef: [f64; 2],
    pub context_scale: [f64; 2],
    pub context_exp: [f64; 2],
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            compute_coef: [1e-6, 100.0],
            compute_scale: [1.0, 1e30],
            compute_exp: [1e-6, 10.0],
            context_coef: [1e-6, 100.0],
            context_scale: [1e-6, 131_072.0],
            context_exp: [1e-6, 10.0],
        }
    }
}

impl ParamBounds {
    /// Intervals in canonical parameter order (matching
    /// [`ScalingParams::as_array`]).
    pub fn as_pairs(&self) -> [(f64, f64); 6] {
        [
            (self.compute_coef[0], self.compute_coef[1]),
            (self.compute_scale[0], self.compute_scale[1]),
            (self.compute_exp[0], self.compute_exp[1]),
            (self.context_coef[0], self.context_coef[1]),
            (self.context_scale[0], self.context_scale[1]),
            (self.context_exp[0], self.context_exp[1]),
        ]
    }

    pub fn contains(&self, params: &ScalingParams) -> bool {
        self.as_pairs()
            .iter()
            .zip(params.as_array())
            .all(|(&(lo, hi), v)| v >= lo && v <= hi)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in FIELD_NAMES.iter().zip(self.as_pairs()) {
            if !lo.is_finite() || !hi.is_finite() || lo <= 0.0 || lo >= hi {
                return Err(Error::Config(format!(
                    "bounds.{name} = [{lo}, {hi}] must be finite with 0 < lower < upper"
                )));
            }
        }
        Ok(())
    }
}

const FIELD_NAMES: [&str; 6] = [
    "compute_coef",
    "compute_scale",
    "compute_exp",
    "context_coef",
    "context_scale",
    "context_exp",
];

/// Everything a fit depends on. Serializes to/from TOML with sections
/// `bounds`, `penalty`, `de`, and `local`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// RNG seed for the global stage (and anything downstream that samples).
    pub seed: u64,
    /// Search the two scale parameters in log10 space. Linear search over a
    /// 30-decade interval effectively never samples small scales, so this
    /// defaults to on; results are always reported in linear units.
    pub log_space_scales: bool,
    pub bounds: ParamBounds,
    pub penalty: PenaltyConfig,
    pub de: DeConfig,
    pub local: LocalConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            log_space_scales: true,
            bounds: ParamBounds::default(),
            penalty: PenaltyConfig::default(),
            de: DeConfig::default(),
            local: LocalConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        self.penalty.validate()?;
        self.de.validate()?;
        self.local.validate()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: FitConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

/// A completed fit: parameters, losses, per-point residuals, convergence
/// diagnostics, and the full provenance needed to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ScalingParams,
    /// Sum of squared residuals.
    pub sse: f64,
    /// Mean absolute residual.
    pub mae: f64,
    /// Signed residuals (observed - predicted), in input point order.
    pub residuals: Vec<f64>,
    pub de_generations_used: usize,
    pub local_converged: bool,
    pub warnings: Vec<String>,
    pub config_echo: FitConfig,
}

impl FitResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Unweighted sum of squared residuals of the scaling law over `points`.
pub fn sse_objective(
    params: &ScalingParams,
    points: &[AggregatedPoint],
    penalty: &PenaltyConfig,
) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyInput("points"));
    }
    params.validate()?;
    penalty.validate()?;
    let p = params.as_array();
    let mut acc = 0.0;
    for pt in points {
        let r = pt.metric - eval_raw(&p, penalty, pt.compute, pt.n_pmt, pt.n_ctx as f64);
        acc += r * r;
    }
    Ok(acc)
}

/// Mapping between reporting units and the conditioned search space.
#[derive(Clone, Copy)]
struct SearchSpace {
    log_scales: bool,
}

impl SearchSpace {
    fn to_linear(self, v: &[f64]) -> [f64; 6] {
        let mut p = [v[0], v[1], v[2], v[3], v[4], v[5]];
        if self.log_scales {
            p[1] = 10f64.powf(p[1]);
            p[4] = 10f64.powf(p[4]);
        }
        p
    }

    fn to_search(self, p: [f64; 6]) -> [f64; 6] {
        let mut v = p;
        if self.log_scales {
            v[1] = v[1].log10();
            v[4] = v[4].log10();
        }
        v
    }

    /// Back to linear units, clamped into the linear bounds: the
    /// log10/powf round trip can land an on-the-boundary iterate one ulp
    /// outside them.
    fn to_linear_in(self, v: &[f64], bounds: &ParamBounds) -> [f64; 6] {
        let mut p = self.to_linear(v);
        for (value, (lo, hi)) in p.iter_mut().zip(bounds.as_pairs()) {
            *value = value.clamp(lo, hi);
        }
        p
    }

    fn bounds(&self, b: &ParamBounds) -> Vec<(f64, f64)> {
        b.as_pairs()
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| {
                if self.log_scales && (i == 1 || i == 4) {
                    (lo.log10(), hi.log10())
                } else {
                    (lo, hi)
                }
            })
            .collect()
    }
}

fn validate_points(points: &[AggregatedPoint]) -> Result<()> {
    for (idx, p) in points.iter().enumerate() {
        p.check()
            .map_err(|msg| Error::Validation { line: idx + 1, msg })?;
    }
    Ok(())
}

/// Fits the scaling law to `points`: global differential evolution over the
/// bounded (optionally log-conditioned) space, then local least-squares
/// refinement from the champion.
pub fn fit(points: &[AggregatedPoint], config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    validate_points(points)?;
    if points.len() < 7 {
        return Err(Error::Underdetermined {
            points: points.len(),
            params: 6,
        });
    }

    let mut warnings = Vec::new();
    let first_metric = points[0].metric;
    if points.iter().all(|p| p.metric == first_metric) {
        warnings.push(format!(
            "degenerate data: all {} points share the metric value {first_metric}; \
             the fit is not identified",
            points.len()
        ));
    }

    let space = SearchSpace {
        log_scales: config.log_space_scales,
    };
    let search_bounds = space.bounds(&config.bounds);
    let data: Vec<(f64, f64, f64, f64)> = points
        .iter()
        .map(|p| (p.compute, p.n_pmt, p.n_ctx as f64, p.metric))
        .collect();
    let penalty = config.penalty;

    let objective = |v: &[f64]| -> f64 {
        let p = space.to_linear(v);
        let mut acc = 0.0;
        for &(compute, n_pmt, n_ctx, metric) in &data {
            let r = metric - eval_raw(&p, &penalty, compute, n_pmt, n_ctx);
            acc += r * r;
        }
        acc
    };

    let de_out = de::differential_evolution(objective, &search_bounds, &config.de, config.seed)?;

    let residual_fn = |v: &[f64], out: &mut [f64]| {
        let p = space.to_linear(v);
        for (k, &(compute, n_pmt, n_ctx, metric)) in data.iter().enumerate() {
            out[k] = metric - eval_raw(&p, &penalty, compute, n_pmt, n_ctx);
        }
    };
    let local_out = local::refine(
        residual_fn,
        data.len(),
        &de_out.best,
        &search_bounds,
        &config.local,
    );

    let params = ScalingParams::from_array(space.to_linear_in(&local_out.x, &config.bounds));
    let p = params.as_array();
    let mut residuals = Vec::with_capacity(data.len());
    let mut sse = 0.0;
    let mut abs_sum = 0.0;
    for &(compute, n_pmt, n_ctx, metric) in &data {
        let r = metric - eval_raw(&p, &penalty, compute, n_pmt, n_ctx);
        residuals.push(r);
        sse += r * r;
        abs_sum += r.abs();
    }

    Ok(FitResult {
        params,
        sse,
        mae: abs_sum / data.len() as f64,
        residuals,
        de_generations_used: de_out.generations,
        local_converged: local_out.converged,
        warnings,
        config_echo: config.clone(),
    })
}

/// Locally refines `start` against `points` under `config`, without a global
/// stage. The result never has a larger SSE than `start`.
pub fn local_refine(
    points: &[AggregatedPoint],
    start: &ScalingParams,
    config: &FitConfig,
) -> Result<ScalingParams> {
    config.validate()?;
    validate_points(points)?;
    start.validate()?;
    if points.is_empty() {
        return Err(Error::EmptyInput("points"));
    }
    if !config.bounds.contains(start) {
        return Err(Error::Config(
            "local refinement start lies outside the configured bounds".into(),
        ));
    }

    let space = SearchSpace {
        log_scales: config.log_space_scales,
    };
    let search_bounds = space.bounds(&config.bounds);
    let data: Vec<(f64, f64, f64, f64)> = points
        .iter()
        .map(|p| (p.compute, p.n_pmt, p.n_ctx as f64, p.metric))
        .collect();
    let penalty = config.penalty;

    let residual_fn = |v: &[f64], out: &mut [f64]| {
        let p = space.to_linear(v);
        for (k, &(compute, n_pmt, n_ctx, metric)) in data.iter().enumerate() {
            out[k] = metric - eval_raw(&p, &penalty, compute, n_pmt, n_ctx);
        }
    };
    let start_search = space.to_search(start.as_array());
    let out = local::refine(
        residual_fn,
        data.len(),
        &start_search,
        &search_bounds,
        &config.local,
    );
    Ok(ScalingParams::from_array(
        space.to_linear_in(&out.x, &config.bounds),
    ))
}
