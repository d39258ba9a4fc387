//! Continuous-treatment world on 25 covariates.
//!
//! Covariates are i.i.d. uniform on `[0, 1]`. The treatment is
//! `T = 1 / (1 + exp(T̃))` with `T̃ = m(X) + 0.5ε`, and the outcome is
//! `Y = h(T, X) + 0.5ε'` where `h(t, x) = s(t) · g(x)` factors into a dose
//! curve and a covariate effect. The oracles average over a fixed pool of
//! fresh covariate draws, so they are shared by every data seed.

use crate::error::{Error, Result};
use crate::numeric::{exp_neg, mean, uniform_matrix, variance, DenseMatrix, SeededRng};

pub const DOSE_COVARIATES: usize = 25;

/// Seed of the Monte Carlo pool behind the oracles.
const ORACLE_SEED: u64 = 0x6f72_6163_6c65;

// 1-based covariate indices of the two averaged blocks
const I1: [usize; 10] = [3, 6, 7, 8, 9, 10, 11, 12, 13, 14];
const I2: [usize; 10] = [15, 16, 17, 18, 19, 20, 21, 22, 23, 24];

fn block_mean(x: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| x[i - 1]).sum::<f64>() / idx.len() as f64
}

fn max3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).max(c)
}

fn min3(a: f64, b: f64, c: f64) -> f64 {
    a.min(b).min(c)
}

/// Noise-free part of `T̃`.
pub fn treatment_mean(x: &[f64]) -> f64 {
    x[0] / (1.0 + x[1])
        + max3(x[2], x[3], x[4]) / (0.2 + min3(x[2], x[3], x[4]))
        + (5.0 * block_mean(x, &I1)).tanh()
        - 2.0
}

/// Dose curve `(1.2 − t²) sin(2πt − 2)`.
pub fn dose_curve(t: f64) -> f64 {
    (1.2 - t * t) * (2.0 * std::f64::consts::PI * t - 2.0).sin()
}

/// Covariate effect multiplying the dose curve.
pub fn covariate_effect(x: &[f64]) -> f64 {
    0.5 * (5.0 * block_mean(x, &I2)).tanh()
        + 1.5 * (0.2 * (x[0] - x[4]) / (0.1 + min3(x[1], x[2], x[3]))).exp()
}

pub fn outcome_mean(t: f64, x: &[f64]) -> f64 {
    dose_curve(t) * covariate_effect(x)
}

fn logit_inverse(t: f64) -> f64 {
    ((1.0 - t) / t).ln()
}

#[derive(Debug, Clone)]
pub struct DoseOracle {
    /// `g(X_j)` over the pool.
    effects: Vec<f64>,
    /// `m(X_j)` over the pool.
    treatment_means: Vec<f64>,
    /// `0.5 ε_j` outcome noise paired with each pool row.
    noise: Vec<f64>,
}

impl DoseOracle {
    pub fn new(mc_n: usize) -> Result<Self> {
        if mc_n < 10_000 {
            return Err(Error::invalid("the Monte Carlo pool needs at least 10^4 draws"));
        }
        let mut rng = SeededRng::new(ORACLE_SEED);
        let x = uniform_matrix(&mut rng, mc_n, DOSE_COVARIATES, 0.0, 1.0);
        let noise = (0..mc_n).map(|_| 0.5 * rng.normal()).collect();
        Ok(Self {
            effects: x.row_iter().map(covariate_effect).collect(),
            treatment_means: x.row_iter().map(treatment_mean).collect(),
            noise,
        })
    }

    pub fn mc_n(&self) -> usize {
        self.effects.len()
    }

    /// `E_X[h(t, X)]`.
    pub fn adrf(&self, t: f64) -> f64 {
        dose_curve(t) * mean(&self.effects)
    }

    /// Monte Carlo standard error of [`Self::adrf`].
    pub fn adrf_se(&self, t: f64) -> f64 {
        dose_curve(t).abs() * (variance(&self.effects) / self.mc_n() as f64).sqrt()
    }

    /// Empirical `τ`-quantile of `h(t, X) + 0.5ε`.
    pub fn qdrf(&self, t: f64, tau: f64) -> f64 {
        let s = dose_curve(t);
        let mut v: Vec<f64> = self.effects.iter().zip(&self.noise).map(|(g, e)| s * g + e).collect();
        let k = ((tau.clamp(0.0, 1.0) * (v.len() - 1) as f64).round()) as usize;
        *v.select_nth_unstable_by(k, f64::total_cmp).1
    }

    /// `f_T(t) / f_{T|X}(t | x)` with the marginal averaged over the pool.
    /// The Jacobian of the logistic transform cancels.
    pub fn stabilized_weight(&self, t: f64, x: &[f64]) -> f64 {
        let z = logit_inverse(t);
        let kern = |m: f64| {
            let u = (z - m) / 0.5;
            exp_neg(-0.5 * u * u)
        };
        let marginal = mean(&self.treatment_means.iter().map(|&m| kern(m)).collect::<Vec<_>>());
        let u = (z - treatment_mean(x)) / 0.5;
        // guard the quotient against underflow far in the tails
        marginal / exp_neg(-0.5 * u * u).max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone)]
pub struct DoseResponseWorld {
    pub x: DenseMatrix,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub oracle: DoseOracle,
}

impl DoseResponseWorld {
    /// Rows `(t_i, x_i)`.
    pub fn joint(&self) -> DenseMatrix {
        let d = self.x.cols() + 1;
        let mut out = DenseMatrix::zeros(self.t.len(), d);
        for (i, &t) in self.t.iter().enumerate() {
            let row = out.row_mut(i);
            row[0] = t;
            row[1..].copy_from_slice(self.x.row(i));
        }
        out
    }

    /// Analytic stabilized weights at the observed `(t_i, x_i)`.
    pub fn true_weights(&self) -> Vec<f64> {
        crate::par::map_indices(self.t.len(), |i| self.oracle.stabilized_weight(self.t[i], self.x.row(i)))
    }
}

pub fn gen_dose_response(n: usize, seed: u64, mc_n: usize) -> Result<DoseResponseWorld> {
    if n < 2 {
        return Err(Error::invalid("need at least two rows"));
    }
    let oracle = DoseOracle::new(mc_n)?;
    let mut rng = SeededRng::new(seed);
    let x = uniform_matrix(&mut rng, n, DOSE_COVARIATES, 0.0, 1.0);
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for row in x.row_iter() {
        let tt = treatment_mean(row) + 0.5 * rng.normal();
        let ti = 1.0 / (1.0 + tt.exp());
        t.push(ti);
        y.push(outcome_mean(ti, row) + 0.5 * rng.normal());
    }
    Ok(DoseResponseWorld { x, t, y, oracle })
}
