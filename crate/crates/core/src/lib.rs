//! Projection pursuit density ratio estimation (ppDRE), classical kernel
//! baselines, synthetic benchmark worlds with known ratios, and the downstream
//! pipelines that consume a fitted ratio: mutual information, weighted
//! dose-response fitting and importance-weighted kernel ridge regression.

// `!(x > 0.0)` is the NaN-rejecting form used for every input check; index
// loops mirror the formulas in the numeric kernels
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod apps;
pub mod baselines;
pub mod basis;
pub mod bench;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod par;
pub mod pp;
pub mod report;
pub mod selection;
pub mod worlds;

pub use error::{Error, Result};
pub use model::RatioModel;
