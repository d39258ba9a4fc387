use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dot, norm, DenseMatrix};

/// Upper bound on `‖w‖` in standardized coordinates.
pub const WEIGHT_CLIP: f64 = 50.0;

/// `r̂(x) = (n_q/n_p) · exp(wᵀx + b)`, i.e. the odds of a linear classifier
/// separating the numerator sample (label 1) from the denominator sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRatioModel {
    pub w: Vec<f64>,
    pub b: f64,
    /// Class-prior correction `n_q / n_p`.
    pub prior: f64,
}

impl LogisticRatioModel {
    pub fn d(&self) -> usize {
        self.w.len()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d() {
            return Err(Error::dims(self.d(), x.len()));
        }
        Ok(self.evaluate_unchecked(x))
    }

    #[inline]
    pub(crate) fn evaluate_unchecked(&self, x: &[f64]) -> f64 {
        // p/(1-p) = exp(logit); clamp the logit so the result stays finite and positive
        let logit = (dot(&self.w, x) + self.b).clamp(-700.0, 700.0);
        self.prior * logit.exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticConfig {
    pub lr: f64,
    pub iters: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { lr: 0.5, iters: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub model: LogisticRatioModel,
    /// Mean cross-entropy after the last step.
    pub loss: f64,
    /// Near-zero loss with a weight vector still growing at the clip.
    pub separated: bool,
}

fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Full-batch gradient descent on the cross-entropy of a linear classifier.
///
/// Features are standardized on the pooled sample during training and the
/// coefficients mapped back, so the step size does not depend on input scale.
/// The fit is deterministic; `seed` is accepted for interface symmetry.
pub fn logistic_ratio_fit(
    xp: &DenseMatrix,
    xq: &DenseMatrix,
    cfg: &LogisticConfig,
    _seed: u64,
) -> Result<LogisticFit> {
    if xp.rows() == 0 || xq.rows() == 0 {
        return Err(Error::invalid("both samples must be non-empty"));
    }
    if xp.cols() != xq.cols() {
        return Err(Error::dims(xq.cols(), xp.cols()));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    let d = xp.cols();
    let (np, nq) = (xp.rows() as f64, xq.rows() as f64);
    let n = np + nq;
    let rows = || xp.row_iter().map(|r| (r, 1.0)).chain(xq.row_iter().map(|r| (r, 0.0)));

    let mut mu = vec![0.0; d];
    for (r, _) in rows() {
        mu.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
    }
    let mut sd = vec![0.0; d];
    for (r, _) in rows() {
        sd.iter_mut().zip(r.iter().zip(&mu)).for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
    }
    sd.iter_mut().for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });
    let z: Vec<(Vec<f64>, f64)> = rows()
        .map(|(r, y)| (r.iter().zip(&mu).zip(&sd).map(|((v, m), s)| (v - m) / s).collect(), y))
        .collect();

    let mut w = vec![0.0; d];
    let mut b = (np / nq).ln();
    let mut loss = f64::INFINITY;
    let mut prev_norm = 0.0;
    let mut separated = false;
    for _ in 0..cfg.iters {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        let mut l = 0.0;
        for (x, y) in &z {
            let s = dot(&w, x) + b;
            l += log1pexp(s) - y * s;
            let e = sigmoid(s) - y;
            gw.iter_mut().zip(x).for_each(|(g, v)| *g += e * v);
            gb += e;
        }
        loss = l / n;
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= cfg.lr * g / n);
        b -= cfg.lr * gb / n;
        let nw = norm(&w);
        if nw > WEIGHT_CLIP {
            w.iter_mut().for_each(|wi| *wi *= WEIGHT_CLIP / nw);
        }
        separated = loss < 1e-6 && nw > prev_norm;
        prev_norm = nw;
    }
    if separated {
        log::warn!("logistic ratio fit: samples are linearly separable; weights clipped");
    }
    let w_raw: Vec<f64> = w.iter().zip(&sd).map(|(wi, s)| wi / s).collect();
    let b_raw = b - dot(&w_raw, &mu);
    Ok(LogisticFit {
        model: LogisticRatioModel {
            w: w_raw,
            b: b_raw,
            prior: nq / np,
        },
        loss,
        separated,
    })
}
