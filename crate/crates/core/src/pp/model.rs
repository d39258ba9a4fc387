use serde::{Deserialize, Serialize};

use crate::basis::GaussianBasis;
use crate::error::{Error, Result};
use crate::numeric::{dot, DenseMatrix};

/// One multiplicative factor `max(βᵀΦ(aᵀx; γ), floor)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub a: Vec<f64>,
    pub basis: GaussianBasis,
    pub beta: Vec<f64>,
    pub floor: f64,
}

impl Projection {
    /// Untruncated sieve value `βᵀΦ(aᵀx)`.
    #[inline]
    pub fn raw(&self, x: &[f64]) -> f64 {
        self.basis.combine(&self.beta, dot(&self.a, x))
    }

    /// Truncated factor value.
    #[inline]
    pub fn factor(&self, x: &[f64]) -> f64 {
        self.raw(x).max(self.floor)
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }
}

/// Sign-identifies a projection on the upper hemisphere and sorts its centers.
///
/// Flipping `(a, γ) → (-a, -γ)` leaves every `φ_j(aᵀx)` unchanged because the
/// Gaussian bump is even; centers are then sorted ascending with `β` permuted
/// alongside.
pub fn canonicalize(proj: &Projection) -> Projection {
    let mut out = proj.clone();
    let flip = out
        .a
        .iter()
        .find(|v| **v != 0.0)
        .is_some_and(|v| *v < 0.0);
    if flip {
        out.a.iter_mut().for_each(|v| *v = -*v);
        out.basis.centers_mut().iter_mut().for_each(|g| *g = -*g);
    }
    let mut order: Vec<usize> = (0..out.beta.len()).collect();
    let centers = out.basis.centers().to_vec();
    order.sort_by(|&i, &j| centers[i].total_cmp(&centers[j]).then(i.cmp(&j)));
    if order.iter().enumerate().any(|(k, &i)| k != i) {
        out.basis = GaussianBasis::new(order.iter().map(|&i| centers[i]).collect());
        out.beta = order.iter().map(|&i| proj.beta[i]).collect();
    }
    out
}

/// `r̂_K(x) = ∏_k max(β_kᵀΦ_k(a_kᵀx), floor_k)`; the empty product is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PPRatioModel {
    pub d: usize,
    pub projections: Vec<Projection>,
}

impl PPRatioModel {
    pub fn constant(d: usize) -> Self {
        Self {
            d,
            projections: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.projections.len()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::dims(self.d, x.len()));
        }
        Ok(self.evaluate_unchecked(x))
    }

    #[inline]
    pub(crate) fn evaluate_unchecked(&self, x: &[f64]) -> f64 {
        self.projections.iter().map(|p| p.factor(x)).product()
    }

    pub fn evaluate_rows(&self, xs: &DenseMatrix) -> Result<Vec<f64>> {
        if xs.cols() != self.d {
            return Err(Error::dims(self.d, xs.cols()));
        }
        Ok(crate::par::map_chunks(xs.rows(), |r| {
            r.map(|i| self.evaluate_unchecked(xs.row(i))).collect::<Vec<_>>()
        })
        .concat())
    }

    /// Lower bound `∏ floor_k` of every evaluation.
    pub fn floor_product(&self) -> f64 {
        self.projections.iter().map(|p| p.floor).product()
    }

    pub fn push(&mut self, p: Projection) -> Result<()> {
        if p.dim() != self.d {
            return Err(Error::dims(self.d, p.dim()));
        }
        self.projections.push(p);
        Ok(())
    }

    /// The first `k` factors as a model of their own.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            d: self.d,
            projections: self.projections[..k.min(self.k())].to_vec(),
        }
    }
}
