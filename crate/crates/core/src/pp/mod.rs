//! Projection pursuit density ratio estimation.
//!
//! The ratio `r(x) = p(x)/q(x)` is approximated by a product of univariate
//! factors `f_k(a_kᵀx)`, each a ridge-regularised combination of Gaussian bumps.
//! Factors are fitted one at a time: for a fixed direction `a` and centers `γ`
//! the coefficients `β` are the solution of a `J × J` linear system, and
//! `(a, γ)` are refined by Adam on the profiled loss. Negative factor values are
//! replaced by the smallest positive value seen on the training inputs, which
//! keeps every evaluation strictly positive.

mod fit;
mod model;
mod objective;

pub use fit::{
    fit, fit_projection, fit_stage, FitConfig, PPFitter, ProjectionDiagnostics, ProjectionFit,
};
pub use model::{canonicalize, PPRatioModel, Projection};
pub use objective::{empirical_loss, loss_grad, profile_beta, Stage};
