//! Consumers of a fitted ratio: mutual information, weighted dose-response
//! curves and importance-weighted kernel ridge regression.

mod dose;
mod krr;

pub use dose::{
    default_smoothing, fit_adrf, fit_qdrf, fit_qdrf_levels, smoothed_pinball, DoseLoss,
    DoseResponseFit, QdrfConfig, ADRF_RIDGE, QDRF_DIVERGENCE,
};
pub use krr::{
    kernel_matrix, krr_cv_lambda, krr_fit, krr_objective, krr_predict, krr_predict_rows, KrrModel,
    KRR_LAMBDA_GRID,
};

use crate::error::{Error, Result};
use crate::model::RatioModel;
use crate::numeric::DenseMatrix;

/// Mean of `ln r̂` over the joint sample.
pub fn estimate_mi(model: &RatioModel, joint: &DenseMatrix) -> Result<f64> {
    mean_log_ratio(&model.evaluate_rows(joint)?)
}

/// Mean of `ln v`; any non-positive value is an error.
pub fn mean_log_ratio(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("empty sample"));
    }
    let mut acc = 0.0;
    for (row, &value) in values.iter().enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonPositiveEvaluation { row, value });
        }
        acc += value.ln();
    }
    Ok(acc / values.len() as f64)
}
