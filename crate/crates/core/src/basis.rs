//! Unit-bandwidth Gaussian sieve basis `φ_j(z) = exp(-(z - γ_j)² / 2)`.

use serde::{Deserialize, Serialize};

use crate::numeric::{exp_neg, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBasis {
    centers: Vec<f64>,
}

/// Result of [`init_centers`]; `degenerate` is set when every projected
/// value was identical.
#[derive(Debug, Clone)]
pub struct CenterInit {
    pub basis: GaussianBasis,
    pub degenerate: bool,
}

impl GaussianBasis {
    /// Panics on an empty or non-finite center list.
    pub fn new(centers: Vec<f64>) -> Self {
        assert!(!centers.is_empty(), "a Gaussian basis needs at least one center");
        assert!(centers.iter().all(|c| c.is_finite()), "non-finite basis center");
        Self { centers }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn centers_mut(&mut self) -> &mut [f64] {
        &mut self.centers
    }

    pub fn eval(&self, z: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(z, &mut out);
        out
    }

    #[inline]
    pub fn eval_into(&self, z: f64, out: &mut [f64]) {
        for (o, &g) in out.iter_mut().zip(&self.centers) {
            let u = z - g;
            *o = exp_neg(-0.5 * u * u);
        }
    }

    /// `∂φ_j/∂z = -(z - γ_j) φ_j(z)`.
    pub fn eval_dz(&self, z: f64) -> Vec<f64> {
        self.centers
            .iter()
            .map(|&g| {
                let u = z - g;
                -u * exp_neg(-0.5 * u * u)
            })
            .collect()
    }

    /// `∂φ_j/∂γ_j = (z - γ_j) φ_j(z)`.
    pub fn eval_dgamma(&self, z: f64) -> Vec<f64> {
        self.eval_dz(z).into_iter().map(|v| -v).collect()
    }

    /// Evaluates `Σ_j β_j φ_j(z)`.
    #[inline]
    pub fn combine(&self, beta: &[f64], z: f64) -> f64 {
        self.centers
            .iter()
            .zip(beta)
            .map(|(&g, &b)| {
                let u = z - g;
                b * exp_neg(-0.5 * u * u)
            })
            .sum()
    }
}

/// Draws `j` centers uniformly on `[min z, max z]`, sorted ascending.
pub fn init_centers(rng: &mut SeededRng, j: usize, projected: &[f64]) -> CenterInit {
    assert!(j >= 1, "need at least one center");
    let lo = projected.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = projected.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        let v = if lo.is_finite() { lo } else { 0.0 };
        return CenterInit {
            basis: GaussianBasis::new(vec![v; j]),
            degenerate: true,
        };
    }
    let mut centers: Vec<f64> = (0..j).map(|_| rng.uniform_range(lo, hi)).collect();
    centers.sort_by(f64::total_cmp);
    CenterInit {
        basis: GaussianBasis::new(centers),
        degenerate: false,
    }
}
