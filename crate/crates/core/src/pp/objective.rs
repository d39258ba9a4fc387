//! The regularised squared-loss objective for one projection stage and its
//! closed-form profile in `β`.
//!
//! For a stage with previous-model weights `w_q = r̂_{k-1}(x^q)` and
//! `w_p = r̂_{k-1}(x^p)`:
//!
//! ```text
//! L(a, γ, β) = (1/n_q) Σ w_q² (βᵀΦ(aᵀx^q))² − (2/n_p) Σ w_p βᵀΦ(aᵀx^p) + λ‖β‖²
//!            = βᵀ (G/n_q + λI) β − 2 βᵀ (W/n_p)
//! ```
//!
//! with `G = Σ w_q² Φ Φᵀ` and `W = Σ w_p Φ`, so `β̂ = (G/n_q + λI)⁻¹ W/n_p`.

use crate::basis::GaussianBasis;
use crate::error::{Error, Result};
use crate::numeric::{dot, gaussian_bump_into, spd_solve, DenseMatrix};
use crate::par;

/// Samples and previous-model weights for one stage.
#[derive(Debug, Clone, Copy)]
pub struct Stage<'a> {
    pub xq: &'a DenseMatrix,
    pub xp: &'a DenseMatrix,
    pub wq: &'a [f64],
    pub wp: &'a [f64],
}

impl<'a> Stage<'a> {
    pub fn new(
        xq: &'a DenseMatrix,
        xp: &'a DenseMatrix,
        wq: &'a [f64],
        wp: &'a [f64],
    ) -> Result<Self> {
        if xq.cols() != xp.cols() {
            return Err(Error::dims(xq.cols(), xp.cols()));
        }
        if wq.len() != xq.rows() {
            return Err(Error::dims(xq.rows(), wq.len()));
        }
        if wp.len() != xp.rows() {
            return Err(Error::dims(xp.rows(), wp.len()));
        }
        if xq.rows() == 0 || xp.rows() == 0 {
            return Err(Error::invalid("both samples must be non-empty"));
        }
        if wq.iter().chain(wp).any(|w| !w.is_finite()) {
            return Err(Error::invalid("previous-model weights must be finite"));
        }
        Ok(Self { xq, xp, wq, wp })
    }

    pub fn dim(&self) -> usize {
        self.xq.cols()
    }

    fn nq(&self) -> f64 {
        self.xq.rows() as f64
    }

    fn np(&self) -> f64 {
        self.xp.rows() as f64
    }
}

/// Normal equations at one `(a, γ)` with their solution.
pub(crate) struct Profiled {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub beta: Vec<f64>,
    pub loss: f64,
}

impl Profiled {
    /// Loss of an arbitrary `β` at the same `(a, γ)`.
    pub(crate) fn loss_at(&self, beta: &[f64]) -> f64 {
        quadratic_loss(&self.a, &self.b, beta)
    }
}

/// Projections and basis values of one sample, stored in row chunks of
/// [`par::CHUNK_ROWS`]; inside a chunk of `m` rows the values are column-major,
/// `phi[start * J + k * m + t]` for row `start + t` and basis function `k`.
struct Side {
    z: Vec<f64>,
    phi: Vec<f64>,
}

impl Side {
    fn new(x: &DenseMatrix, a: &[f64], basis: &GaussianBasis) -> Self {
        let j = basis.len();
        let mut z = vec![0.0; x.rows()];
        par::fill_chunks(&mut z, 1, |range, dst| {
            for (o, i) in dst.iter_mut().zip(range) {
                *o = dot(x.row(i), a);
            }
        });
        let mut phi = vec![0.0; x.rows() * j];
        par::fill_chunks(&mut phi, j, |range, dst| {
            let m = range.len();
            let zc = &z[range];
            for (k, &g) in basis.centers().iter().enumerate() {
                gaussian_bump_into(&mut dst[k * m..(k + 1) * m], zc, g);
            }
        });
        Self { z, phi }
    }

    /// The column-major block of the rows in `range`.
    #[inline]
    fn block(&self, range: &std::ops::Range<usize>, j: usize) -> &[f64] {
        &self.phi[range.start * j..range.end * j]
    }

    /// `βᵀΦ` for every row of a chunk.
    fn combine_block(block: &[f64], beta: &[f64], m: usize) -> Vec<f64> {
        let mut s = vec![0.0; m];
        for (k, &b) in beta.iter().enumerate() {
            for (o, &v) in s.iter_mut().zip(&block[k * m..(k + 1) * m]) {
                *o += b * v;
            }
        }
        s
    }
}

/// Adds `U Uᵀ` to the `jp × jp` accumulator (upper block triangle only).
///
/// `panels` holds `U` (`jp × m`, `jp` a multiple of 4) as `jp / 4` packed
/// panels of `m × 4` values so the 4 × 4 register kernel reads contiguous
/// lanes.
fn gram_upper(panels: &[f64], jp: usize, m: usize, acc: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the required CPU feature was detected at runtime.
            unsafe { gram_upper_avx2(panels, jp, m, acc) };
            return;
        }
    }
    gram_upper_kernel(panels, jp, m, acc);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn gram_upper_avx2(panels: &[f64], jp: usize, m: usize, acc: &mut [f64]) {
    gram_upper_kernel(panels, jp, m, acc);
}

#[inline(always)]
fn gram_upper_kernel(panels: &[f64], jp: usize, m: usize, acc: &mut [f64]) {
    let nb = jp / 4;
    for rb in 0..nb {
        let pr = &panels[rb * 4 * m..(rb + 1) * 4 * m];
        for cb in rb..nb {
            let pc = &panels[cb * 4 * m..(cb + 1) * 4 * m];
            let mut s = [[0.0f64; 4]; 4];
            for (a, b) in pr.chunks_exact(4).zip(pc.chunks_exact(4)) {
                for x in 0..4 {
                    for y in 0..4 {
                        s[x][y] += a[x] * b[y];
                    }
                }
            }
            for (x, sx) in s.iter().enumerate() {
                let row = (rb * 4 + x) * jp + cb * 4;
                for (o, v) in acc[row..row + 4].iter_mut().zip(sx) {
                    *o += v;
                }
            }
        }
    }
}

/// Projected values and basis evaluations cached for one `(a, γ)`.
pub(crate) struct Evaluated<'s, 'a> {
    stage: &'s Stage<'a>,
    basis: &'s GaussianBasis,
    q: Side,
    p: Side,
}

impl<'s, 'a> Evaluated<'s, 'a> {
    pub(crate) fn new(stage: &'s Stage<'a>, a: &[f64], basis: &'s GaussianBasis) -> Self {
        Self {
            stage,
            basis,
            q: Side::new(stage.xq, a, basis),
            p: Side::new(stage.xp, a, basis),
        }
    }

    fn j(&self) -> usize {
        self.basis.len()
    }

    /// `(G/n_q + λI, W/n_p)`.
    pub(crate) fn normal_equations(&self, lambda: f64) -> (DenseMatrix, Vec<f64>) {
        let j = self.j();
        let jp = j.div_ceil(4) * 4;
        let wq = self.stage.wq;
        let upper = par::sum_rows(wq.len(), jp * jp, |range, acc| {
            let m = range.len();
            let block = self.q.block(&range, j);
            let w = &wq[range.clone()];
            let mut panels = vec![0.0; jp * m];
            for k in 0..j {
                let (pb, lane) = (k / 4, k % 4);
                let col = &block[k * m..(k + 1) * m];
                for (t, (&v, &wt)) in col.iter().zip(w).enumerate() {
                    panels[(pb * m + t) * 4 + lane] = wt * v;
                }
            }
            gram_upper(&panels, jp, m, acc);
        });
        let nq = self.stage.nq();
        let mut a = DenseMatrix::zeros(j, j);
        for r in 0..j {
            for c in r..j {
                let v = upper[r * jp + c] / nq;
                a.set(r, c, v);
                a.set(c, r, v);
            }
            a.set(r, r, a.get(r, r) + lambda);
        }
        let wp = self.stage.wp;
        let w = par::sum_rows(wp.len(), j, |range, acc| {
            let m = range.len();
            let block = self.p.block(&range, j);
            for (k, o) in acc.iter_mut().enumerate() {
                let col = &block[k * m..(k + 1) * m];
                *o += col.iter().zip(&wp[range.clone()]).map(|(v, w)| w * v).sum::<f64>();
            }
        });
        let np = self.stage.np();
        (a, w.into_iter().map(|v| v / np).collect())
    }

    pub(crate) fn profile(&self, lambda: f64) -> Result<Profiled> {
        let (a, b) = self.normal_equations(lambda);
        let beta = spd_solve(&a, &b).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } if lambda == 0.0 => Error::SingularProfileSystem,
            other => other,
        })?;
        let loss = quadratic_loss(&a, &b, &beta);
        Ok(Profiled { a, b, beta, loss })
    }

    #[cfg(test)]
    pub(crate) fn loss(&self, beta: &[f64], lambda: f64) -> f64 {
        let (a, b) = self.normal_equations(lambda);
        quadratic_loss(&a, &b, beta)
    }

    /// Gradients in `(a, γ)` at fixed `β`.
    ///
    /// With `c_i = ∂L/∂(βᵀΦ(z_i))` and `∂φ_k/∂γ_k = (z - γ_k) φ_k = -∂φ_k/∂z`:
    /// `∂L/∂γ_k = Σ c_i β_k (z_i - γ_k) φ_k(z_i)` and
    /// `∂L/∂a = -Σ c_i x_i Σ_k β_k (z_i - γ_k) φ_k(z_i)`.
    pub(crate) fn grad(&self, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let j = self.j();
        let d = self.stage.dim();
        let centers = self.basis.centers();
        let side = |x: &DenseMatrix, sd: &Side, coef: &(dyn Fn(usize, f64) -> f64 + Sync)| {
            par::sum_rows(sd.z.len(), d + j, |range, acc| {
                let m = range.len();
                let block = sd.block(&range, j);
                let z = &sd.z[range.clone()];
                let s = Side::combine_block(block, beta, m);
                let c: Vec<f64> = range.clone().zip(&s).map(|(i, &si)| coef(i, si)).collect();
                let mut dsum = vec![0.0; m];
                for k in 0..j {
                    let (bk, gk) = (beta[k], centers[k]);
                    let mut gsum = 0.0;
                    for t in 0..m {
                        let term = bk * (z[t] - gk) * block[k * m + t];
                        dsum[t] += term;
                        gsum += c[t] * term;
                    }
                    acc[d + k] += gsum;
                }
                for (t, i) in range.enumerate() {
                    let dz = -c[t] * dsum[t];
                    for (g, &xv) in acc[..d].iter_mut().zip(x.row(i)) {
                        *g += dz * xv;
                    }
                }
            })
        };
        let (nq, np) = (self.stage.nq(), self.stage.np());
        let wq = self.stage.wq;
        let wp = self.stage.wp;
        let gq = side(self.stage.xq, &self.q, &|i, s| 2.0 * wq[i] * wq[i] * s / nq);
        let gp = side(self.stage.xp, &self.p, &|i, _| -2.0 * wp[i] / np);
        let total: Vec<f64> = gq.iter().zip(&gp).map(|(u, v)| u + v).collect();
        (total[..d].to_vec(), total[d..].to_vec())
    }

    /// `βᵀΦ` on the pooled training inputs, q-sample first.
    pub(crate) fn raw_values(&self, beta: &[f64]) -> Vec<f64> {
        let j = self.j();
        [&self.q, &self.p]
            .into_iter()
            .flat_map(|sd| {
                par::map_chunks(sd.z.len(), |range| {
                    Side::combine_block(sd.block(&range, j), beta, range.len())
                })
            })
            .flatten()
            .collect()
    }
}

fn quadratic_loss(a: &DenseMatrix, b: &[f64], beta: &[f64]) -> f64 {
    let ab = a.matvec(beta).expect("square system");
    dot(beta, &ab) - 2.0 * dot(beta, b)
}

fn check_shapes(a: &[f64], basis: &GaussianBasis, beta: Option<&[f64]>, stage: &Stage) -> Result<()> {
    if a.len() != stage.dim() {
        return Err(Error::dims(stage.dim(), a.len()));
    }
    if let Some(b) = beta {
        if b.len() != basis.len() {
            return Err(Error::dims(basis.len(), b.len()));
        }
    }
    Ok(())
}

/// Exact minimiser in `β` of the stage loss at fixed `(a, γ)`.
pub fn profile_beta(a: &[f64], basis: &GaussianBasis, lambda: f64, stage: &Stage) -> Result<Vec<f64>> {
    check_shapes(a, basis, None, stage)?;
    if lambda < 0.0 {
        return Err(Error::invalid("ridge strength must be non-negative"));
    }
    Ok(Evaluated::new(stage, a, basis).profile(lambda)?.beta)
}

/// Stage loss computed term by term from its definition.
pub fn empirical_loss(
    a: &[f64],
    basis: &GaussianBasis,
    beta: &[f64],
    lambda: f64,
    stage: &Stage,
) -> Result<f64> {
    check_shapes(a, basis, Some(beta), stage)?;
    let q_term: f64 = stage
        .xq
        .row_iter()
        .zip(stage.wq)
        .map(|(x, w)| {
            let f = basis.combine(beta, dot(a, x));
            w * w * f * f
        })
        .sum::<f64>()
        / stage.nq();
    let p_term: f64 = stage
        .xp
        .row_iter()
        .zip(stage.wp)
        .map(|(x, w)| w * basis.combine(beta, dot(a, x)))
        .sum::<f64>()
        / stage.np();
    Ok(q_term - 2.0 * p_term + lambda * dot(beta, beta))
}

/// Gradients of [`empirical_loss`] in `a` and `γ` with `β` held fixed.
pub fn loss_grad(
    a: &[f64],
    basis: &GaussianBasis,
    beta: &[f64],
    stage: &Stage,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_shapes(a, basis, Some(beta), stage)?;
    Ok(Evaluated::new(stage, a, basis).grad(beta))
}
