//! Data bundled with the toolkit: the checkpoint roster, the per-task
//! observation tables, per-dataset token statistics, reference coefficient
//! sets, and residual rows for held-out models.
//!
//! Everything is compiled into the binary so the bundled studies run with
//! zero network or filesystem dependencies.

use crate::data::{BuiltinTask, DatasetStats, TaskProfile};
use crate::model::ScalingParams;

/// Shot counts used by the bundled observation grids. User-supplied data may
/// use arbitrary shot counts.
pub const SHOT_GRID: [u32; 10] = [0, 1, 3, 7, 15, 31, 63, 127, 255, 511];

/// Base pretraining corpus size (tokens) shared by all bundled checkpoints.
pub const BASE_TRAINING_TOKENS: u64 = 2_000_000_000_000;

/// Fine-tuning recipe used to extend a checkpoint's context window.
pub const EXTENSION_STEPS: u64 = 400;
pub const EXTENSION_BATCH: u64 = 64;

/// One evaluated checkpoint: identity, size, context limit, and its quoted
/// training compute / extension-token figures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub model_id: &'static str,
    /// Non-embedding parameter count.
    pub n_params: u64,
    /// Context limit in tokens.
    pub n_ctx: u64,
    /// Training compute in FLOPs, as quoted (rounded to 5 significant
    /// digits; recomputing 6*N*D agrees to ~0.01%).
    pub compute: f64,
    /// Context-extension training tokens as quoted, in billions; `None` for
    /// the base 4k checkpoints.
    pub added_tokens_billions: Option<f64>,
}

const N_7B: u64 = 6_476_271_616;
const N_13B: u64 = 12_688_184_320;

/// The 12 checkpoints behind the bundled observation grids.
#[rustfmt::skip]
pub const CHECKPOINTS: [Checkpoint; 12] = [
    Checkpoint { model_id: "Llama-2-7b-hf",         n_params: N_7B,  n_ctx: 4096,   compute: 7.7719e22, added_tokens_billions: None },
    Checkpoint { model_id: "Yarn-Llama-2-7b-8k",    n_params: N_7B,  n_ctx: 8192,   compute: 7.7723e22, added_tokens_billions: Some(0.210) },
    Checkpoint { model_id: "Yarn-Llama-2-7b-16k",   n_params: N_7B,  n_ctx: 16384,  compute: 7.7732e22, added_tokens_billions: Some(0.419) },
    Checkpoint { model_id: "Yarn-Llama-2-7b-32k",   n_params: N_7B,  n_ctx: 32768,  compute: 7.7748e22, added_tokens_billions: Some(0.836) },
    Checkpoint { model_id: "Yarn-Llama-2-7b-64k",   n_params: N_7B,  n_ctx: 65536,  compute: 7.7780e22, added_tokens_billions: Some(1.678) },
    Checkpoint { model_id: "Yarn-Llama-2-7b-128k",  n_params: N_7B,  n_ctx: 131072, compute: 7.7846e22, added_tokens_billions: Some(3.355) },
    Checkpoint { model_id: "Llama-2-13b-hf",        n_params: N_13B, n_ctx: 4096,   compute: 1.5227e23, added_tokens_billions: None },
    Checkpoint { model_id: "Yarn-Llama-2-13b-8k",   n_params: N_13B, n_ctx: 8192,   compute: 1.5227e23, added_tokens_billions: Some(0.210) },
    Checkpoint { model_id: "Yarn-Llama-2-13b-16k",  n_params: N_13B, n_ctx: 16384,  compute: 1.5229e23, added_tokens_billions: Some(0.419) },
    Checkpoint { model_id: "Yarn-Llama-2-13b-32k",  n_params: N_13B, n_ctx: 32768,  compute: 1.5232e23, added_tokens_billions: Some(0.836) },
    Checkpoint { model_id: "Yarn-Llama-2-13b-64k",  n_params: N_13B, n_ctx: 65536,  compute: 1.5239e23, added_tokens_billions: Some(1.678) },
    Checkpoint { model_id: "Yarn-Llama-2-13b-128k", n_params: N_13B, n_ctx: 131072, compute: 1.5251e23, added_tokens_billions: Some(3.355) },
];

pub fn checkpoint(model_id: &str) -> Option<&'static Checkpoint> {
    CHECKPOINTS.iter().find(|c| c.model_id == model_id)
}

/// Per-task mean-metric grids (12 checkpoints x 10 shot counts), stored as
/// CSV resources so they can be spot-checked against their source.
pub(crate) fn observation_table(task: BuiltinTask) -> &'static str {
    match task {
        BuiltinTask::Arithmetic => include_str!("fixtures/arithmetic.csv"),
        BuiltinTask::Commonsense => include_str!("fixtures/commonsense.csv"),
        BuiltinTask::Translation => include_str!("fixtures/translation.csv"),
    }
}

/// Per-dataset token-length statistics used to reconstruct average prompt
/// lengths for the bundled grids.
pub fn task_profile(task: BuiltinTask) -> TaskProfile {
    #[rustfmt::skip]
    let datasets: &[(&str, f64, f64, u64)] = match task {
        BuiltinTask::Arithmetic => &[
            ("GSM8K",        177.64, 177.43,  250),
            ("MATH",         160.54, 155.74,  250),
            ("AQUA-RAT",      88.45,  93.09,  250),
            // 56 subsets x 50 test instances
            ("DeepMindMath",  57.94,  61.05, 2800),
        ],
        BuiltinTask::Commonsense => &[
            ("PIQA", 81.16, 81.55, 250),
            ("SIQA", 56.68, 56.87, 250),
            ("OpenBookQA", 47.74, 49.39, 250),
            ("HellaSwag", 153.06, 156.05, 250),
            ("WinoGrande", 53.98, 53.87, 250),
            ("ARC-Easy", 66.69, 67.14, 250),
            ("ARC-Challenge", 75.65, 76.83, 250),
            ("CommonSenseQA", 50.42, 49.92, 250),
        ],
        BuiltinTask::Translation => &[
            ("WMT14-CS-EN", 95.01, 85.25, 250),
            ("WMT14-DE-EN", 85.53, 77.68, 250),
            ("WMT14-FR-EN", 95.94, 84.29, 250),
            ("WMT14-HI-EN", 34.01, 147.09, 250),
            ("WMT14-RU-EN", 73.54, 86.56, 250),
        ],
    };
    TaskProfile {
        datasets: datasets
            .iter()
            .map(
                |&(name, avg_train_tokens, avg_test_tokens, test_count)| DatasetStats {
                    name: name.to_string(),
                    avg_train_tokens,
                    avg_test_tokens,
                    test_count,
                },
            )
            .collect(),
    }
}

/// Reference coefficient sets for the three bundled tasks.
///
/// Useful for cross-checks and as ready-made inputs to
/// `predict`/`contour`/`synth`. Refitting the bundled grids yields
/// different raw coefficients with equivalent predictions: the compute
/// factor depends on its coefficient and scale only through
/// `coef / scale^exp`, so coefficients are comparable in prediction space
/// only.
pub fn reference_params(task: BuiltinTask) -> ScalingParams {
    let (a, cs, ce, b, ns, ne) = match task {
        BuiltinTask::Arithmetic => (9.96, 9.7e29, 0.26, 62.24, 1.3e5, 0.56),
        BuiltinTask::Commonsense => (99.39, 1.5e28, 0.40, 96.31, 3.5e3, 1.12),
        BuiltinTask::Translation => (5.55, 5.4e29, 0.23, 31.82, 3.0e2, 2.97),
    };
    ScalingParams {
        compute_coef: a,
        compute_scale: cs,
        compute_exp: ce,
        context_coef: b,
        context_scale: ns,
        context_exp: ne,
    }
}

/// Signed prediction residuals (observed - predicted) of the reference fits
/// on models outside the fitted checkpoint family, one residual per task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalModelRow {
    pub model_id: &'static str,
    /// Estimated training compute in FLOPs.
    pub compute: f64,
    /// Context limit in tokens at which the model was evaluated.
    pub n_ctx: u64,
    pub residual_arithmetic: f64,
    pub residual_commonsense: f64,
    pub residual_translation: f64,
}

impl ExternalModelRow {
    pub fn residual(&self, task: BuiltinTask) -> f64 {
        match task {
            BuiltinTask::Arithmetic => self.residual_arithmetic,
            BuiltinTask::Commonsense => self.residual_commonsense,
            BuiltinTask::Translation => self.residual_translation,
        }
    }
}

/// Held-out models spanning three orders of magnitude in training compute.
#[rustfmt::skip]
pub const HELDOUT_MODELS: [ExternalModelRow; 5] = [
    ExternalModelRow { model_id: "Qwen-2.5-0.5B", compute: 3.8e22, n_ctx: 32768, residual_arithmetic:  0.057, residual_commonsense:  0.008, residual_translation: -0.057 },
    ExternalModelRow { model_id: "Gemma-2-2B",    compute: 2.4e22, n_ctx: 4096,  residual_arithmetic:  0.066, residual_commonsense:  0.260, residual_translation:  0.059 },
    ExternalModelRow { model_id: "Gemma-2-9B",    compute: 4.0e23, n_ctx: 4096,  residual_arithmetic:  0.069, residual_commonsense:  0.051, residual_translation:  0.017 },
    ExternalModelRow { model_id: "Gemma-2-27B",   compute: 2.0e24, n_ctx: 4096,  residual_arithmetic:  0.024, residual_commonsense: -0.099, residual_translation: -0.054 },
    ExternalModelRow { model_id: "Llama-2-70B",   compute: 8.2e23, n_ctx: 4096,  residual_arithmetic: -0.002, residual_commonsense: -0.031, residual_translation: -0.025 },
];

/// The same 7B base model extended to a 32k window by two different
/// techniques; residuals of the reference fits at the 32k limit.
#[rustfmt::skip]
pub const EXTENSION_TECHNIQUES: [ExternalModelRow; 2] = [
    ExternalModelRow { model_id: "Llama-2-7B-PI-32k",   compute: 7.777e22, n_ctx: 32768, residual_arithmetic: 0.014, residual_commonsense: 0.079, residual_translation: -0.005 },
    ExternalModelRow { model_id: "Llama-2-7B-YaRN-32k", compute: 7.775e22, n_ctx: 32768, residual_arithmetic: 0.005, residual_commonsense: 0.014, residual_translation: -0.005 },
];

/// Reconstructed prompt length for the largest bundled shot count that still
/// fits a window of `n_ctx` tokens; the evaluation point used when comparing
/// against the held-out-model residual rows.
pub fn max_in_window_prompt(task: BuiltinTask, n_ctx: u64) -> f64 {
    let profile = task_profile(task);
    let mut best =
        crate::data::reconstruct_prompt_length(&profile, 0).expect("bundled profile is nonempty");
    for &shots in SHOT_GRID.iter() {
        let n_pmt = crate::data::reconstruct_prompt_length(&profile, shots)
            .expect("bundled profile is nonempty");
        if n_pmt <= n_ctx as f64 {
            best = n_pmt;
        }
    }
    best
}
