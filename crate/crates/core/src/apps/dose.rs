//! Quartic dose-response curves fitted under sample weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{quantile, spd_solve, variance, AdamState, DenseMatrix};

/// Ridge added to the normalized normal equations.
pub const ADRF_RIDGE: f64 = 1e-10;
/// Smoothed pinball loss above which the optimizer is considered diverged.
pub const QDRF_DIVERGENCE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DoseLoss {
    Squared,
    Pinball { tau: f64 },
}

/// `g(t; θ) = θ₀ + θ₁t + θ₂t² + θ₃t³ + θ₄t⁴`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseResponseFit {
    pub theta: [f64; 5],
    pub loss: DoseLoss,
    /// Final training loss (weighted mean).
    pub objective: f64,
}

impl DoseResponseFit {
    pub fn predict(&self, t: f64) -> f64 {
        self.theta.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }
}

fn powers(t: f64) -> [f64; 5] {
    [1.0, t, t * t, t * t * t, t * t * t * t]
}

fn check_inputs(t: &[f64], y: &[f64], w: &[f64]) -> Result<f64> {
    if t.len() != y.len() || t.len() != w.len() {
        return Err(Error::dims(t.len(), y.len().min(w.len())));
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite dose or outcome"));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("weights are all zero"));
    }
    Ok(total)
}

/// Weighted least squares for the quartic model, by the 5 × 5 normal
/// equations normalized by the total weight. The system is built on the
/// rescaled dose `2t − 1`, where the ridge does not bias the solution, and
/// converted back to powers of `t`.
pub fn fit_adrf(t: &[f64], y: &[f64], w: &[f64]) -> Result<DoseResponseFit> {
    let total = check_inputs(t, y, w)?;
    let mut support: Vec<f64> = t.iter().zip(w).filter(|(_, &wi)| wi > 0.0).map(|(ti, _)| *ti).collect();
    support.sort_by(f64::total_cmp);
    support.dedup();
    if support.len() < 5 {
        return Err(Error::RankDeficient(format!(
            "{} distinct weighted doses for 5 coefficients",
            support.len()
        )));
    }
    let mut a = DenseMatrix::zeros(5, 5);
    let mut b = [0.0; 5];
    for ((&ti, &yi), &wi) in t.iter().zip(y).zip(w) {
        let p = powers(2.0 * ti - 1.0);
        let wn = wi / total;
        for r in 0..5 {
            b[r] += wn * p[r] * yi;
            for c in 0..5 {
                a.set(r, c, a.get(r, c) + wn * p[r] * p[c]);
            }
        }
    }
    for r in 0..5 {
        a.set(r, r, a.get(r, r) + ADRF_RIDGE);
    }
    let theta = spd_solve(&a, &b).map_err(|e| Error::RankDeficient(e.to_string()))?;
    let c: [f64; 5] = theta.try_into().expect("five coefficients");
    let fit = DoseResponseFit {
        theta: unscale(&c),
        loss: DoseLoss::Squared,
        objective: 0.0,
    };
    let objective = t
        .iter()
        .zip(y)
        .zip(w)
        .map(|((ti, yi), wi)| wi / total * (yi - fit.predict(*ti)).powi(2))
        .sum();
    Ok(DoseResponseFit { objective, ..fit })
}

/// Pinball loss with the kink replaced by a parabola on `|v| <= h`; value
/// and slope match the pinball loss at `|v| = h`.
pub fn smoothed_pinball(v: f64, tau: f64, h: f64) -> (f64, f64) {
    if v > h {
        (tau * v, tau)
    } else if v < -h {
        ((tau - 1.0) * v, tau - 1.0)
    } else {
        (v * v / (4.0 * h) + (tau - 0.5) * v + h / 4.0, v / (2.0 * h) + tau - 0.5)
    }
}

/// `0.05 · sd(y)`, the default smoothing width.
pub fn default_smoothing(y: &[f64]) -> f64 {
    0.05 * variance(y).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QdrfConfig {
    pub lr: f64,
    pub iters: usize,
    /// Smoothing width; `None` uses [`default_smoothing`].
    pub h: Option<f64>,
}

impl Default for QdrfConfig {
    fn default() -> Self {
        Self {
            lr: 0.02,
            iters: 3000,
            h: None,
        }
    }
}

/// Binomial expansion of `Σ c_k (2t − 1)^k` into powers of `t`.
fn unscale(c: &[f64; 5]) -> [f64; 5] {
    const BINOM: [[f64; 5]; 5] = [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0, 0.0],
        [1.0, 2.0, 1.0, 0.0, 0.0],
        [1.0, 3.0, 3.0, 1.0, 0.0],
        [1.0, 4.0, 6.0, 4.0, 1.0],
    ];
    let mut out = [0.0; 5];
    for k in 0..5 {
        // (2t − 1)^k = Σ_j C(k, j) 2^j t^j (−1)^{k−j}
        for j in 0..=k {
            let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
            out[j] += c[k] * BINOM[k][j] * 2f64.powi(j as i32) * sign;
        }
    }
    out
}

/// Weighted smoothed-pinball fit of the quartic by full-batch Adam.
///
/// The optimizer works on the rescaled dose `2t − 1` for conditioning and
/// starts from the constant weighted `τ`-quantile of `y`. The best iterate
/// seen is returned, so the loss never exceeds the starting loss.
pub fn fit_qdrf(t: &[f64], y: &[f64], w: &[f64], tau: f64, cfg: &QdrfConfig) -> Result<DoseResponseFit> {
    let total = check_inputs(t, y, w)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!("quantile level must lie in (0, 1), got {tau}")));
    }
    let h = cfg.h.unwrap_or_else(|| default_smoothing(y));
    if !(h > 0.0) {
        return Err(Error::invalid("smoothing width must be positive"));
    }
    let basis: Vec<[f64; 5]> = t.iter().map(|&ti| powers(2.0 * ti - 1.0)).collect();
    let wn: Vec<f64> = w.iter().map(|wi| wi / total).collect();
    let eval = |c: &[f64]| {
        let mut loss = 0.0;
        let mut grad = [0.0; 5];
        for ((p, &yi), &wi) in basis.iter().zip(y).zip(&wn) {
            let g: f64 = p.iter().zip(c).map(|(a, b)| a * b).sum();
            let (l, dl) = smoothed_pinball(yi - g, tau, h);
            loss += wi * l;
            for k in 0..5 {
                grad[k] -= wi * dl * p[k];
            }
        }
        (loss, grad)
    };

    let mut c = [0.0; 5];
    c[0] = weighted_quantile(y, &wn, tau);
    let mut best = (f64::INFINITY, c);
    let mut adam = AdamState::new(5);
    for _ in 0..=cfg.iters {
        let (loss, grad) = eval(&c);
        if !(loss <= QDRF_DIVERGENCE) {
            return Err(Error::Divergence { loss });
        }
        if loss < best.0 {
            best = (loss, c);
        }
        adam.step(&mut c, &grad, cfg.lr)?;
    }
    Ok(DoseResponseFit {
        theta: unscale(&best.1),
        loss: DoseLoss::Pinball { tau },
        objective: best.0,
    })
}

fn weighted_quantile(y: &[f64], w: &[f64], tau: f64) -> f64 {
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let mut acc = 0.0;
    for &i in &idx {
        acc += w[i];
        if acc >= tau {
            return y[i];
        }
    }
    quantile(y, tau)
}

/// Fits several quantile levels concurrently, each with its own optimizer.
pub fn fit_qdrf_levels(
    t: &[f64],
    y: &[f64],
    w: &[f64],
    taus: &[f64],
    cfg: &QdrfConfig,
) -> Vec<Result<DoseResponseFit>> {
    crate::par::map_slice(taus, |&tau| fit_qdrf(t, y, w, tau, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::SeededRng;
    use proptest::prelude::*;

    const TRUE: [f64; 5] = [0.5, -1.0, 2.0, 0.3, -1.5];

    fn quartic(t: f64) -> f64 {
        TRUE.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    fn doses(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeededRng::new(seed);
        (0..n).map(|_| rng.uniform()).collect()
    }

    #[test]
    fn recovers_exact_quartic() {
        let t = doses(200, 1);
        let y: Vec<f64> = t.iter().map(|&v| quartic(v)).collect();
        let fit = fit_adrf(&t, &y, &vec![1.0; 200]).unwrap();
        for (a, b) in fit.theta.iter().zip(&TRUE) {
            assert!((a - b).abs() < 1e-6, "{:?}", fit.theta);
        }
    }

    #[test]
    fn weight_scale_invariance_and_subset() {
        let mut rng = SeededRng::new(2);
        let t = doses(100, 3);
        let y: Vec<f64> = t.iter().map(|&v| quartic(v) + rng.normal()).collect();
        let w: Vec<f64> = (0..100).map(|_| rng.uniform()).collect();
        let w2: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        assert_eq!(fit_adrf(&t, &y, &w).unwrap().theta, fit_adrf(&t, &y, &w2).unwrap().theta);

        // zero weights outside the first 40 rows reproduce a fit on those rows
        let mask: Vec<f64> = (0..100).map(|i| if i < 40 { 1.0 } else { 0.0 }).collect();
        let a = fit_adrf(&t, &y, &mask).unwrap().theta;
        let b = fit_adrf(&t[..40], &y[..40], &[1.0; 40]).unwrap().theta;
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-8 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn normal_equations_residual() {
        let mut rng = SeededRng::new(4);
        let t = doses(300, 5);
        let y: Vec<f64> = t.iter().map(|&v| quartic(v) + rng.normal()).collect();
        let w: Vec<f64> = (0..300).map(|_| rng.uniform() * 3.0).collect();
        let fit = fit_adrf(&t, &y, &w).unwrap();
        let total: f64 = w.iter().sum();
        let mut resid = [0.0; 5];
        for i in 0..300 {
            let p = powers(t[i]);
            let r = w[i] / total * (fit.predict(t[i]) - y[i]);
            for k in 0..5 {
                resid[k] += r * p[k];
            }
        }
        for r in resid {
            assert!(r.abs() <= 1e-8, "{resid:?}");
        }
    }

    #[test]
    fn rank_deficient_and_bad_weights() {
        let t = [0.1, 0.2, 0.1, 0.2, 0.3, 0.3];
        let y = [1.0; 6];
        assert!(matches!(fit_adrf(&t, &y, &[1.0; 6]), Err(Error::RankDeficient(_))));
        assert!(fit_adrf(&[0.1; 3], &[1.0; 3], &[0.0; 3]).is_err());
        assert!(fit_adrf(&[0.1; 3], &[1.0; 3], &[1.0, -1.0, 1.0]).is_err());
    }

    #[test]
    fn pinball_smoothing_is_continuous() {
        for tau in [0.1, 0.5, 0.9] {
            let h = 0.3;
            for v in [h, -h] {
                let inner = smoothed_pinball(v * (1.0 - 1e-12), tau, h);
                let outer = smoothed_pinball(v * (1.0 + 1e-12), tau, h);
                assert!((inner.0 - outer.0).abs() < 1e-9);
                assert!((inner.1 - outer.1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unscale_matches_direct_evaluation() {
        let c = [0.3, -1.2, 0.7, 2.0, -0.4];
        let fit = DoseResponseFit {
            theta: unscale(&c),
            loss: DoseLoss::Squared,
            objective: 0.0,
        };
        for t in [0.0, 0.25, 0.8, 1.0] {
            let s = 2.0 * t - 1.0;
            let direct: f64 = c.iter().rev().fold(0.0, |acc, v| acc * s + v);
            assert!((fit.predict(t) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_response_gives_constant_quantiles() {
        let t = doses(200, 6);
        let y = vec![3.25; 200];
        for tau in [0.1, 0.5, 0.9] {
            let cfg = QdrfConfig { h: Some(0.01), ..Default::default() };
            let fit = fit_qdrf(&t, &y, &vec![1.0; 200], tau, &cfg).unwrap();
            for s in [0.0, 0.5, 1.0] {
                assert!((fit.predict(s) - 3.25).abs() < 1e-2, "{tau} {}", fit.predict(s));
            }
        }
    }

    #[test]
    fn median_fit_tracks_symmetric_noise() {
        let mut rng = SeededRng::new(7);
        let t = doses(2000, 8);
        let y: Vec<f64> = t.iter().map(|&v| quartic(v) + 0.3 * rng.normal()).collect();
        let w = vec![1.0; 2000];
        let fit = fit_qdrf(&t, &y, &w, 0.5, &QdrfConfig::default()).unwrap();
        for s in [0.1, 0.3, 0.5, 0.7, 0.9] {
            assert!((fit.predict(s) - quartic(s)).abs() < 0.08, "{s}");
        }
        let upper = fit_qdrf(&t, &y, &w, 0.9, &QdrfConfig::default()).unwrap();
        for s in [0.1, 0.5, 0.9] {
            // 0.9 quantile of N(0, 0.3²) is about 0.384
            assert!((upper.predict(s) - quartic(s) - 0.384).abs() < 0.1, "{s}");
        }
    }

    #[test]
    fn errors() {
        let t = doses(20, 9);
        let y = vec![1.0; 20];
        let w = vec![1.0; 20];
        let cfg = QdrfConfig::default();
        assert!(fit_qdrf(&t, &y, &w, 0.0, &cfg).is_err());
        assert!(fit_qdrf(&t, &y, &w, 1.0, &cfg).is_err());
        let bad = QdrfConfig { h: Some(0.0), ..cfg.clone() };
        assert!(fit_qdrf(&t, &y, &w, 0.5, &bad).is_err());
        let huge: Vec<f64> = (0..20).map(|i| 1e7 * (i as f64)).collect();
        assert!(matches!(
            fit_qdrf(&t, &huge, &w, 0.5, &cfg),
            Err(Error::Divergence { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn qdrf_never_worse_than_start(seed in any::<u64>(), tau in 0.05f64..0.95) {
            let mut rng = SeededRng::new(seed);
            let t = doses(100, seed);
            let y: Vec<f64> = t.iter().map(|&v| quartic(v) + rng.normal()).collect();
            let w: Vec<f64> = (0..100).map(|_| rng.uniform()).collect();
            let total: f64 = w.iter().sum();
            let wn: Vec<f64> = w.iter().map(|v| v / total).collect();
            let cfg = QdrfConfig { iters: 200, ..Default::default() };
            let h = default_smoothing(&y);
            let start = weighted_quantile(&y, &wn, tau);
            let init: f64 = y.iter().zip(&wn).map(|(yi, wi)| wi * smoothed_pinball(yi - start, tau, h).0).sum();
            let fit = fit_qdrf(&t, &y, &w, tau, &cfg).unwrap();
            prop_assert!(fit.objective <= init);
        }
    }
}
