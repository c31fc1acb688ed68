//! Fits downstream LLM task performance as a joint function of training
//! compute and context length, and reproduces the bundled in-distribution,
//! holdout-generalization, and penalty-ablation studies from embedded
//! observation grids or user-supplied evaluation records.
//!
//! Modules:
//! - [`model`]: the scaling law itself and compute accounting
//! - [`data`]: record parsing, aggregation, prompt-length reconstruction,
//!   bundled observation grids
//! - [`optimize`]: bounded two-stage fitting (differential evolution +
//!   local least squares)
//! - [`analysis`]: error reports, holdout studies, the penalty ablation,
//!   contour grids, synthetic surfaces

pub mod analysis;
pub mod data;
pub mod error;
pub mod model;
pub mod optimize;

pub use error::{Error, Result};
