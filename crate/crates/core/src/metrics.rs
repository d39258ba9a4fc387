//! Accuracy metrics for ratios, scalar targets and regression curves.

use crate::error::{Error, Result};
use crate::numeric::{mean, variance};

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dims(b.len(), a.len()));
    }
    if a.is_empty() {
        return Err(Error::invalid("metric of an empty sample"));
    }
    Ok(())
}

pub fn rmse(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    same_len(estimates, truths)?;
    if truths.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite truth"));
    }
    Ok(mean(&estimates.iter().zip(truths).map(|(e, t)| (e - t).powi(2)).collect::<Vec<_>>()).sqrt())
}

/// `sqrt(mean((ln r̂ − ln r)²))`; every input must be strictly positive.
pub fn rmsle(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    same_len(estimates, truths)?;
    let mut acc = 0.0;
    for (row, (&e, &t)) in estimates.iter().zip(truths).enumerate() {
        for value in [e, t] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveEvaluation { row, value });
            }
        }
        acc += (e.ln() - t.ln()).powi(2);
    }
    Ok((acc / estimates.len() as f64).sqrt())
}

/// Raises values below `floor` to `floor`; the flag reports whether any were.
pub fn clamp_positive(values: &[f64], floor: f64) -> (Vec<f64>, bool) {
    let mut clamped = false;
    let out = values
        .iter()
        .map(|&v| {
            if v < floor || v.is_nan() {
                clamped = true;
                floor
            } else {
                v
            }
        })
        .collect();
    (out, clamped)
}

pub fn mae_mi(estimate: f64, truth: f64) -> f64 {
    (estimate - truth).abs()
}

/// Mean squared error over the population variance of `y_true`.
pub fn nmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    same_len(y_pred, y_true)?;
    let var = variance(y_true);
    if !(var > 0.0) {
        return Err(Error::invalid("test targets have zero variance"));
    }
    let mse = mean(&y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).collect::<Vec<_>>());
    Ok(mse / var)
}

/// Average squared gap between two curves over the observed doses.
pub fn ase(g_hat: impl Fn(f64) -> f64, g_star: impl Fn(f64) -> f64, t: &[f64]) -> Result<f64> {
    if t.is_empty() {
        return Err(Error::invalid("metric of an empty sample"));
    }
    Ok(mean(&t.iter().map(|&ti| (g_hat(ti) - g_star(ti)).powi(2)).collect::<Vec<_>>()))
}
