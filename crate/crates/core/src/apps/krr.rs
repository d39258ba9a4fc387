//! Importance-weighted kernel ridge regression.
//!
//! Minimizes `(1/n) Σ w_i [(f(x_i) − y_i)² + λ‖θ‖²]` over
//! `f(x) = Σ θ_j K(x, x_j)` with `K(x, x') = exp(−‖x − x'‖² / d)`. The ridge
//! sits inside the weighted sum, so its effective strength is `λ · mean(w)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dot, norm, Cholesky, DenseMatrix, SeededRng};

pub const KRR_LAMBDA_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 0.1, 1.0];

const RESIDUAL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrModel {
    pub x_train: DenseMatrix,
    pub theta: Vec<f64>,
    pub lambda: f64,
}

fn kernel(a: &[f64], b: &[f64], d: f64) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
    (-s / d).exp()
}

/// Kernel matrix between the rows of `a` and the rows of `b`.
pub fn kernel_matrix(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let d = a.cols() as f64;
    let rows = crate::par::map_indices(a.rows(), |i| {
        b.row_iter().map(|r| kernel(a.row(i), r, d)).collect::<Vec<_>>()
    });
    DenseMatrix::new(a.rows(), b.rows(), rows.concat()).expect("kernel values are finite")
}

/// `Kᵀ diag(c) K` for symmetric `K`.
fn weighted_gram(k: &DenseMatrix, c: &[f64]) -> DenseMatrix {
    let n = k.rows();
    let rows = crate::par::map_indices(n, |i| {
        let mut out = vec![0.0; n];
        for (l, &cl) in c.iter().enumerate() {
            let s = k.get(l, i) * cl;
            if s != 0.0 {
                out.iter_mut().zip(k.row(l)).for_each(|(o, v)| *o += s * v);
            }
        }
        out
    });
    DenseMatrix::new(n, n, rows.concat()).expect("finite products")
}

fn check(x: &DenseMatrix, y: &[f64], w: &[f64], lambda: f64) -> Result<f64> {
    if x.rows() != y.len() || x.rows() != w.len() {
        return Err(Error::dims(x.rows(), y.len().min(w.len())));
    }
    if x.rows() == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("ridge parameter must be positive"));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let s = w.iter().sum::<f64>() / w.len() as f64;
    if !(s > 0.0) {
        return Err(Error::invalid("weights are all zero"));
    }
    Ok(s)
}

/// Solves `(K W K + λ s I) θ = K W y` with `W = diag(w)/n`, `s = Σw/n`,
/// which is the stationarity condition of the weighted objective.
pub fn krr_fit(x: &DenseMatrix, y: &[f64], w: &[f64], lambda: f64) -> Result<KrrModel> {
    check(x, y, w, lambda)?;
    let k = kernel_matrix(x, x);
    solve_with_gram(x, &k, y, w, lambda)
}

fn solve_with_gram(x: &DenseMatrix, k: &DenseMatrix, y: &[f64], w: &[f64], lambda: f64) -> Result<KrrModel> {
    let n = x.rows();
    let s = check(x, y, w, lambda)?;
    let c: Vec<f64> = w.iter().map(|v| v / n as f64).collect();
    let mut a = weighted_gram(k, &c);
    for i in 0..n {
        a.set(i, i, a.get(i, i) + lambda * s);
    }
    let wy: Vec<f64> = y.iter().zip(&c).map(|(yi, ci)| yi * ci).collect();
    let rhs = k.matvec(&wy)?;
    let chol = Cholesky::factor(&a).map_err(|_| Error::RankDeficient("kernel ridge system is singular".into()))?;
    let mut theta = chol.solve(&rhs)?;
    // one step of iterative refinement when the direct solve is loose
    let resid = |t: &[f64]| -> Result<Vec<f64>> {
        Ok(a.matvec(t)?.iter().zip(&rhs).map(|(u, v)| v - u).collect())
    };
    let r = resid(&theta)?;
    if norm(&r) > RESIDUAL_TOL {
        let delta = chol.solve(&r)?;
        theta.iter_mut().zip(delta).for_each(|(t, dl)| *t += dl);
        let r2 = norm(&resid(&theta)?);
        if r2 > RESIDUAL_TOL * (1.0 + norm(&rhs)) {
            log::warn!("kernel ridge residual {r2:e} above tolerance");
        }
    }
    Ok(KrrModel {
        x_train: x.clone(),
        theta,
        lambda,
    })
}

pub fn krr_predict(model: &KrrModel, x: &[f64]) -> Result<f64> {
    let d = model.x_train.cols();
    if x.len() != d {
        return Err(Error::dims(d, x.len()));
    }
    Ok(model
        .x_train
        .row_iter()
        .zip(&model.theta)
        .map(|(r, t)| t * kernel(x, r, d as f64))
        .sum())
}

pub fn krr_predict_rows(model: &KrrModel, xs: &DenseMatrix) -> Result<Vec<f64>> {
    if xs.cols() != model.x_train.cols() {
        return Err(Error::dims(model.x_train.cols(), xs.cols()));
    }
    Ok(crate::par::map_indices(xs.rows(), |i| {
        krr_predict(model, xs.row(i)).expect("dimension checked")
    }))
}

/// The weighted objective at `theta`.
pub fn krr_objective(x: &DenseMatrix, y: &[f64], w: &[f64], lambda: f64, theta: &[f64]) -> f64 {
    let k = kernel_matrix(x, x);
    let f = k.matvec(theta).expect("square");
    let pen = lambda * dot(theta, theta);
    let n = y.len() as f64;
    f.iter()
        .zip(y)
        .zip(w)
        .map(|((fi, yi), wi)| wi * ((fi - yi).powi(2) + pen))
        .sum::<f64>()
        / n
}

/// Picks `λ` from `grid` by `folds`-fold cross-validation of the weighted
/// squared error `Σ w (y − f)² / Σ w` on the held-out rows; ties go to the
/// larger ridge.
pub fn krr_cv_lambda(
    x: &DenseMatrix,
    y: &[f64],
    w: &[f64],
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<f64> {
    check(x, y, w, grid.first().copied().unwrap_or(1.0))?;
    if grid.is_empty() {
        return Err(Error::invalid("empty ridge grid"));
    }
    let n = x.rows();
    let folds = folds.clamp(2, n.max(2));
    let perm = SeededRng::derived(seed, &[0x6b_7272]).permutation(n);
    let mut fold_of = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let k_full = kernel_matrix(x, x);
    let mut err = vec![0.0; grid.len()];
    for f in 0..folds {
        let tr: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let va: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let xt = x.select_rows(&tr);
        let yt: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
        let wt: Vec<f64> = tr.iter().map(|&i| w[i]).collect();
        let wv: f64 = va.iter().map(|&i| w[i]).sum();
        if !(wt.iter().sum::<f64>() > 0.0) || !(wv > 0.0) {
            continue;
        }
        let kt = k_full.select_rows(&tr);
        let kt = DenseMatrix::new(
            tr.len(),
            tr.len(),
            kt.row_iter().flat_map(|r| tr.iter().map(move |&j| r[j])).collect(),
        )?;
        for (g, &lambda) in grid.iter().enumerate() {
            let m = solve_with_gram(&xt, &kt, &yt, &wt, lambda)?;
            let sse: f64 = va
                .iter()
                .map(|&i| {
                    let f: f64 = tr.iter().zip(&m.theta).map(|(&j, t)| t * k_full.get(i, j)).sum();
                    w[i] * (y[i] - f).powi(2)
                })
                .sum();
            err[g] += sse / wv;
        }
    }
    let mut best = 0;
    for g in 1..grid.len() {
        if err[g] < err[best] || (err[g] == err[best] && grid[g] > grid[best]) {
            best = g;
        }
    }
    Ok(grid[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{standard_normal, uniform_matrix};

    fn toy(n: usize, seed: u64) -> (DenseMatrix, Vec<f64>) {
        let mut rng = SeededRng::new(seed);
        let x = uniform_matrix(&mut rng, n, 2, -1.0, 1.0);
        let y = x.row_iter().map(|r| (2.0 * r[0]).sin() + r[1] * r[1]).collect();
        (x, y)
    }

    #[test]
    fn uniform_weights_match_direct_solve() {
        let (x, y) = toy(30, 1);
        let m = krr_fit(&x, &y, &[1.0; 30], 0.01).unwrap();
        // direct: (K K / n + λ I) θ = K y / n
        let k = kernel_matrix(&x, &x);
        let n = 30.0;
        let mut a = DenseMatrix::zeros(30, 30);
        for i in 0..30 {
            for j in 0..30 {
                let s: f64 = (0..30).map(|l| k.get(i, l) * k.get(l, j)).sum();
                a.set(i, j, s / n + if i == j { 0.01 } else { 0.0 });
            }
        }
        let rhs: Vec<f64> = k.matvec(&y).unwrap().iter().map(|v| v / n).collect();
        let direct = crate::numeric::spd_solve(&a, &rhs).unwrap();
        for (u, v) in m.theta.iter().zip(&direct) {
            assert!((u - v).abs() < 1e-6 * (1.0 + v.abs()), "{u} {v}");
        }
    }

    #[test]
    fn huge_ridge_shrinks_to_zero() {
        let (x, y) = toy(20, 2);
        let m = krr_fit(&x, &y, &[1.0; 20], 1e12).unwrap();
        assert!(m.theta.iter().all(|t| t.abs() < 1e-9));
        assert!(krr_predict(&m, &[0.2, 0.3]).unwrap().abs() < 1e-8);
    }

    #[test]
    fn stationarity_by_finite_differences() {
        let (x, y) = toy(20, 3);
        let mut rng = SeededRng::new(4);
        let w: Vec<f64> = (0..20).map(|_| 0.2 + rng.uniform() * 2.0).collect();
        let lambda = 0.05;
        let m = krr_fit(&x, &y, &w, lambda).unwrap();
        let h = 1e-5;
        for j in 0..20 {
            let mut up = m.theta.clone();
            let mut dn = m.theta.clone();
            up[j] += h;
            dn[j] -= h;
            let g = (krr_objective(&x, &y, &w, lambda, &up) - krr_objective(&x, &y, &w, lambda, &dn)) / (2.0 * h);
            assert!(g.abs() <= 1e-6, "coordinate {j}: {g:e}");
        }
    }

    #[test]
    fn predictions() {
        let x = DenseMatrix::new(1, 3, vec![0.1, 0.2, 0.3]).unwrap();
        let m = KrrModel {
            x_train: x.clone(),
            theta: vec![1.0],
            lambda: 1.0,
        };
        assert_eq!(krr_predict(&m, &[0.1, 0.2, 0.3]).unwrap(), 1.0);
        let zero = KrrModel {
            theta: vec![0.0],
            ..m.clone()
        };
        assert_eq!(krr_predict(&zero, &[5.0, 1.0, 2.0]).unwrap(), 0.0);
        assert!(krr_predict(&m, &[0.1]).is_err());
    }

    #[test]
    fn interpolates_with_tiny_ridge() {
        let (x, y) = toy(20, 5);
        let m = krr_fit(&x, &y, &[1.0; 20], 1e-9).unwrap();
        let pred = krr_predict_rows(&m, &x).unwrap();
        let worst = pred.iter().zip(&y).map(|(p, t)| (p - t).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-2, "{worst}");
    }

    #[test]
    fn cv_prefers_small_ridge_on_clean_data() {
        let (x, y) = toy(120, 6);
        let lambda = krr_cv_lambda(&x, &y, &[1.0; 120], &KRR_LAMBDA_GRID, 5, 1).unwrap();
        assert!(lambda <= 1e-2, "{lambda}");
        assert_eq!(lambda, krr_cv_lambda(&x, &y, &[1.0; 120], &KRR_LAMBDA_GRID, 5, 1).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        let x = standard_normal(&mut SeededRng::new(0), 5, 2);
        assert!(krr_fit(&x, &[0.0; 5], &[1.0; 5], 0.0).is_err());
        assert!(krr_fit(&x, &[0.0; 5], &[0.0; 5], 1.0).is_err());
        assert!(krr_fit(&x, &[0.0; 4], &[1.0; 5], 1.0).is_err());
    }
}
