//! The context-aware scaling law and its training-compute accounting.
//!
//! Downstream task performance is modeled as the product of three factors:
//! a saturating power law in training compute, a saturating power law in
//! prompt length, and a logistic penalty that collapses the prediction once
//! the prompt exceeds the model's context limit:
//!
//! ```text
//! P(C, n_pmt, n_ctx) = sat(A, Cs, a, C) * sat(B, Ns, b, n_pmt)
//!                      * logistic(sharpness * (n_ctx - n_pmt))
//! sat(coef, scale, exp, x) = 1 - exp(-coef * (x / scale)^exp)
//! ```
//!
//! Every type here is an immutable value and every function is pure, so the
//! module is safe to use from any number of threads without synchronization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six fitted coefficients of the scaling law.
///
/// Fields are grouped by the factor they parameterize; all six must be
/// strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    /// Coefficient of the compute factor (dimensionless).
    pub compute_coef: f64,
    /// Scale of the compute factor, in FLOPs.
    pub compute_scale: f64,
    /// Exponent of the compute factor (dimensionless).
    pub compute_exp: f64,
    /// Coefficient of the context factor (dimensionless).
    pub context_coef: f64,
    /// Scale of the context factor, in tokens.
    pub context_scale: f64,
    /// Exponent of the context factor (dimensionless).
    pub context_exp: f64,
}

impl ScalingParams {
    pub fn new(
        compute_coef: f64,
        compute_scale: f64,
        compute_exp: f64,
        context_coef: f64,
        context_scale: f64,
        context_exp: f64,
    ) -> Result<Self> {
        let params = Self {
            compute_coef,
            compute_scale,
            compute_exp,
            context_coef,
            context_scale,
            context_exp,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks that all six coefficients are finite and strictly positive.
    pub fn validate(&self) -> Result<()> {
        require_positive("compute_coef", self.compute_coef)?;
        require_positive("compute_scale", self.compute_scale)?;
        require_positive("compute_exp", self.compute_exp)?;
        require_positive("context_coef", self.context_coef)?;
        require_positive("context_scale", self.context_scale)?;
        require_positive("context_exp", self.context_exp)?;
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.compute_coef,
            self.compute_scale,
            self.compute_exp,
            self.context_coef,
            self.context_scale,
            self.context_exp,
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            compute_coef: v[0],
            compute_scale: v[1],
            compute_exp: v[2],
            context_coef: v[3],
            context_scale: v[4],
            context_exp: v[5],
        }
    }
}

/// Configuration of the over-limit penalty factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    /// When false, the penalty factor is identically 1 for all inputs.
    pub enabled: bool,
    /// Logistic slope, in 1/tokens. At the default of 1 the transition from
    /// ~1 to ~0 spans roughly +-10 tokens around `n_pmt = n_ctx`.
    pub sharpness: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            sharpness: 1.0,
        }
    }
}

impl PenaltyConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("sharpness", self.sharpness)
    }
}

/// Inputs of the training-compute estimate `C = 6 * n_params * d_tokens`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeSpec {
    /// Non-embedding parameter count.
    pub n_params: u64,
    /// Training-dataset size in tokens.
    pub d_tokens: u64,
}

/// One saturating power-law factor: `1 - exp(-coef * (x / scale)^exponent)`.
///
/// Zero at `x = 0`, strictly increasing in `x`, asymptoting to 1.
pub fn saturating_term(coef: f64, scale: f64, exponent: f64, x: f64) -> Result<f64> {
    require_positive("coef", coef)?;
    require_positive("scale", scale)?;
    require_positive("exponent", exponent)?;
    require_nonnegative("x", x)?;
    Ok(sat_raw(coef, scale, exponent, x))
}

/// The over-limit penalty: `logistic(sharpness * (n_ctx - n_pmt))`.
///
/// ~1 when the prompt is well inside the window, exactly 0.5 at
/// `n_pmt = n_ctx`, ~0 once the prompt exceeds the window. Returns 1 when
/// the penalty is disabled.
pub fn penalty_factor(n_pmt: f64, n_ctx: f64, cfg: &PenaltyConfig) -> Result<f64> {
    require_nonnegative("n_pmt", n_pmt)?;
    require_positive("n_ctx", n_ctx)?;
    cfg.validate()?;
    Ok(penalty_raw(n_pmt, n_ctx, cfg))
}

/// Evaluates the full scaling law: the product of the compute factor, the
/// context factor, and the penalty factor.
pub fn eval_scaling_law(
    params: &ScalingParams,
    cfg: &PenaltyConfig,
    compute: f64,
    n_pmt: f64,
    n_ctx: f64,
) -> Result<f64> {
    params.validate()?;
    cfg.validate()?;
    require_positive("compute", compute)?;
    require_nonnegative("n_pmt", n_pmt)?;
    require_positive("n_ctx", n_ctx)?;
    Ok(eval_raw(&params.as_array(), cfg, compute, n_pmt, n_ctx))
}

/// Training compute in FLOPs, `6 * n_params * d_tokens`.
///
/// Carried in f64: exact to ~1 ulp for parameter and token counts below
/// 2^53, comfortably past the 1e26-FLOP scale.
pub fn training_compute(spec: &ComputeSpec) -> Result<f64> {
    if spec.n_params == 0 {
        return Err(Error::Domain {
            arg: "n_params",
            value: 0.0,
            reason: "must be strictly positive",
        });
    }
    if spec.d_tokens == 0 {
        return Err(Error::Domain {
            arg: "d_tokens",
            value: 0.0,
            reason: "must be strictly positive",
        });
    }
    Ok(6.0 * spec.n_params as f64 * spec.d_tokens as f64)
}

/// Tokens added to the training set by a context-extension run:
/// `steps * batch * seq_len`.
pub fn extension_tokens(steps: u64, batch: u64, seq_len: u64) -> u64 {
    let wide = steps as u128 * batch as u128 * seq_len as u128;
    wide.min(u64::MAX as u128) as u64
}

// ---------------------------------------------------------------------------
// Unchecked kernels shared with the optimizer's hot loop.

pub(crate) fn sat_raw(coef: f64, scale: f64, exponent: f64, x: f64) -> f64 {
    // expm1 keeps precision for small arguments; an overflowed power simply
    // saturates the factor at 1.
    -f64::exp_m1(-coef * (x / scale).powf(exponent))
}

pub(crate) fn penalty_raw(n_pmt: f64, n_ctx: f64, cfg: &PenaltyConfig) -> f64 {
    if !cfg.enabled {
        return 1.0;
    }
    logistic(cfg.sharpness * (n_ctx - n_pmt))
}

pub(crate) fn eval_raw(
    p: &[f64; 6],
    cfg: &PenaltyConfig,
    compute: f64,
    n_pmt: f64,
    n_ctx: f64,
) -> f64 {
    sat_raw(p[0], p[1], p[2], compute)
        * sat_raw(p[3], p[4], p[5], n_pmt)
        * penalty_raw(n_pmt, n_ctx, cfg)
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn require_positive(arg: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::Domain {
            arg,
            value,
            reason: "must be finite and strictly positive",
        });
    }
    Ok(())
}

fn require_nonnegative(arg: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() || value < 0.0 {
        return Err(Error::Domain {
            arg,
            value,
            reason: "must be finite and nonnegative",
        });
    }
    Ok(())
}
