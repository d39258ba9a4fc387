use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dot, spd_solve, DenseMatrix, SeededRng};

/// Smallest value a KLIEP evaluation may take.
pub const KLIEP_MIN: f64 = 1e-12;

/// Default number of kernel centers drawn from the numerator sample.
pub const MAX_CENTERS: usize = 100;

/// `exp(-‖x - x'‖² / (2σ²))`.
#[inline]
pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// `r̂(x) = max(θᵀψ(x), min_value)` with `ψ_ℓ(x) = K(x, c_ℓ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRatioModel {
    pub centers: DenseMatrix,
    pub sigma: f64,
    pub theta: Vec<f64>,
    /// Lower clamp applied at evaluation: 0 for uLSIF, [`KLIEP_MIN`] for KLIEP.
    pub min_value: f64,
}

impl KernelRatioModel {
    pub fn d(&self) -> usize {
        self.centers.cols()
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        self.centers
            .row_iter()
            .map(|c| gaussian_kernel(x, c, self.sigma))
            .collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d() {
            return Err(Error::dims(self.d(), x.len()));
        }
        Ok(self.evaluate_unchecked(x))
    }

    #[inline]
    pub(crate) fn evaluate_unchecked(&self, x: &[f64]) -> f64 {
        dot(&self.theta, &self.features(x)).max(self.min_value)
    }
}

fn design(x: &DenseMatrix, centers: &DenseMatrix, sigma: f64) -> DenseMatrix {
    let b = centers.rows();
    let mut out = DenseMatrix::zeros(x.rows(), b);
    for (i, row) in x.row_iter().enumerate() {
        for (l, c) in centers.row_iter().enumerate() {
            out.set(i, l, gaussian_kernel(row, c, sigma));
        }
    }
    out
}

fn column_means(m: &DenseMatrix) -> Vec<f64> {
    let mut acc = vec![0.0; m.cols()];
    for r in m.row_iter() {
        acc.iter_mut().zip(r).for_each(|(a, v)| *a += v);
    }
    let n = m.rows() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

fn check_pair(xp: &DenseMatrix, xq: &DenseMatrix, sigma: f64) -> Result<()> {
    if xp.rows() == 0 || xq.rows() == 0 {
        return Err(Error::invalid("both samples must be non-empty"));
    }
    if xp.cols() != xq.cols() {
        return Err(Error::dims(xq.cols(), xp.cols()));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("kernel bandwidth must be positive"));
    }
    Ok(())
}

/// Draws `min(b, n_p)` centers from the numerator sample without replacement.
pub fn draw_centers(xp: &DenseMatrix, b: usize, seed: u64) -> DenseMatrix {
    let b = b.min(xp.rows()).max(1);
    let mut rng = SeededRng::derived(seed, &[0x6b65_726e]);
    let mut idx = rng.sample_without_replacement(xp.rows(), b);
    idx.sort_unstable();
    xp.select_rows(&idx)
}

/// Median pairwise distance over the first rows of the pooled sample; the
/// reference scale for bandwidth grids.
pub fn median_distance(xp: &DenseMatrix, xq: &DenseMatrix) -> f64 {
    let take = |m: &DenseMatrix| m.row_iter().take(300).map(<[f64]>::to_vec).collect::<Vec<_>>();
    let pool: Vec<Vec<f64>> = take(xp).into_iter().chain(take(xq)).collect();
    let mut ds = Vec::with_capacity(pool.len() * pool.len() / 2);
    for i in 0..pool.len() {
        for j in 0..i {
            let d2: f64 = pool[i].iter().zip(&pool[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            ds.push(d2.sqrt());
        }
    }
    let m = crate::numeric::median(&ds);
    if m > 0.0 && m.is_finite() {
        m
    } else {
        1.0
    }
}

#[derive(Debug, Clone)]
pub struct UlsifFit {
    pub model: KernelRatioModel,
    /// `‖(Ĥ + λI)θ − ĥ‖` before truncation.
    pub residual: f64,
    /// Number of coefficients set to zero by truncation.
    pub truncated: usize,
}

/// Unconstrained least-squares importance fitting with a ridge penalty.
pub fn ulsif_fit(
    xp: &DenseMatrix,
    xq: &DenseMatrix,
    sigma: f64,
    lambda: f64,
    b: usize,
    seed: u64,
) -> Result<UlsifFit> {
    check_pair(xp, xq, sigma)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("uLSIF ridge must be positive"));
    }
    if b == 0 || b > xp.rows() {
        return Err(Error::invalid(format!(
            "center count {b} must lie in 1..={}",
            xp.rows()
        )));
    }
    let centers = draw_centers(xp, b, seed);
    let b = centers.rows();
    let psi_q = design(xq, &centers, sigma);
    let h_vec = column_means(&design(xp, &centers, sigma));
    let mut h = DenseMatrix::zeros(b, b);
    for r in psi_q.row_iter() {
        for i in 0..b {
            let ri = r[i];
            for j in i..b {
                h.set(i, j, h.get(i, j) + ri * r[j]);
            }
        }
    }
    let nq = xq.rows() as f64;
    for i in 0..b {
        for j in i..b {
            let v = h.get(i, j) / nq + if i == j { lambda } else { 0.0 };
            h.set(i, j, v);
            h.set(j, i, v);
        }
    }
    let theta = spd_solve(&h, &h_vec)?;
    let hv = h.matvec(&theta)?;
    let residual = hv
        .iter()
        .zip(&h_vec)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let truncated = theta.iter().filter(|t| **t < 0.0).count();
    let theta = theta.into_iter().map(|t| t.max(0.0)).collect();
    Ok(UlsifFit {
        model: KernelRatioModel {
            centers,
            sigma,
            theta,
            min_value: 0.0,
        },
        residual,
        truncated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KliepConfig {
    /// Initial ascent step size.
    pub lr: f64,
    pub iters: usize,
    /// Stop when an accepted step improves the objective by less than this.
    pub tol: f64,
}

impl Default for KliepConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            iters: 2000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KliepFit {
    pub model: KernelRatioModel,
    /// Objective `(1/n_p) Σ log θᵀψ(x_p)` after each accepted step.
    pub objective: Vec<f64>,
    /// Set when some numerator evaluation had to be clamped before the log.
    pub clamped: bool,
}

/// KLIEP by projected gradient ascent with backtracking on the step size.
pub fn kliep_fit(
    xp: &DenseMatrix,
    xq: &DenseMatrix,
    sigma: f64,
    b: usize,
    cfg: &KliepConfig,
    seed: u64,
) -> Result<KliepFit> {
    check_pair(xp, xq, sigma)?;
    if b == 0 || b > xp.rows() {
        return Err(Error::invalid(format!(
            "center count {b} must lie in 1..={}",
            xp.rows()
        )));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::invalid("KLIEP step size must be positive"));
    }
    let centers = draw_centers(xp, b, seed);
    let b = centers.rows();
    let psi_p = design(xp, &centers, sigma);
    let mean_q = column_means(&design(xq, &centers, sigma));
    let mq2 = dot(&mean_q, &mean_q);
    if !(mq2 > 0.0) {
        return Err(Error::invalid("denominator kernel means vanish; bandwidth too small"));
    }
    let mut clamped = false;
    let mut objective_of = |theta: &[f64]| -> f64 {
        let mut s = 0.0;
        for r in psi_p.row_iter() {
            let v = dot(theta, r);
            if v <= 0.0 {
                clamped = true;
            }
            s += v.max(KLIEP_MIN).ln();
        }
        s / psi_p.rows() as f64
    };
    let project = |theta: &mut Vec<f64>| -> bool {
        let c = dot(&mean_q, theta);
        let shift = (1.0 - c) / mq2;
        theta.iter_mut().zip(&mean_q).for_each(|(t, m)| *t = (*t + shift * m).max(0.0));
        let c = dot(&mean_q, theta);
        if !(c > 0.0) {
            return false;
        }
        theta.iter_mut().for_each(|t| *t /= c);
        true
    };

    let s: f64 = mean_q.iter().sum();
    let mut theta = vec![1.0 / s; b];
    let mut obj = objective_of(&theta);
    let mut trace = vec![obj];
    let mut eps = cfg.lr;
    let np = psi_p.rows() as f64;
    for _ in 0..cfg.iters {
        let mut grad = vec![0.0; b];
        for r in psi_p.row_iter() {
            let v = dot(&theta, r).max(KLIEP_MIN);
            grad.iter_mut().zip(r).for_each(|(g, p)| *g += p / v);
        }
        grad.iter_mut().for_each(|g| *g /= np);
        let mut accepted = false;
        while eps > 1e-14 {
            let mut cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + eps * g).collect();
            if project(&mut cand) {
                let o = objective_of(&cand);
                if o >= obj {
                    let gain = o - obj;
                    theta = cand;
                    obj = o;
                    trace.push(o);
                    accepted = gain >= cfg.tol;
                    break;
                }
            }
            eps *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(KliepFit {
        model: KernelRatioModel {
            centers,
            sigma,
            theta,
            min_value: KLIEP_MIN,
        },
        objective: trace,
        clamped,
    })
}

/// `(1/n_q) Σ θᵀψ(x_q)`; equals 1 on every KLIEP fit.
pub fn kliep_constraint(model: &KernelRatioModel, xq: &DenseMatrix) -> f64 {
    let mean_q = column_means(&design(xq, &model.centers, model.sigma));
    dot(&mean_q, &model.theta)
}
