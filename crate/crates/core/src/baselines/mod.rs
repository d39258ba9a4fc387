//! Classical density ratio baselines: uLSIF, KLIEP and a logistic-regression
//! classifier turned into a ratio through its odds.

mod kernel;
mod logistic;

pub use kernel::{
    draw_centers, gaussian_kernel, kliep_constraint, kliep_fit, median_distance, ulsif_fit,
    KernelRatioModel, KliepConfig, KliepFit, UlsifFit, KLIEP_MIN, MAX_CENTERS,
};
pub use logistic::{
    logistic_ratio_fit, LogisticConfig, LogisticFit, LogisticRatioModel, WEIGHT_CLIP,
};
