use serde::{Deserialize, Serialize};

use super::model::{canonicalize, PPRatioModel, Projection};
use super::objective::{Evaluated, Stage};
use crate::basis::init_centers;
use crate::error::{Error, Result};
use crate::numeric::{norm, AdamState, DenseMatrix, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Basis size `J`.
    pub j: usize,
    pub lambda: f64,
    /// Adam learning rate for `(a, γ)`.
    pub lr: f64,
    pub max_inner_iters: usize,
    pub rel_tol: f64,
    /// Iterations between the two losses compared by the convergence test.
    pub window: usize,
    pub seed: u64,
    /// Use truncated factors when propagating `r̂_{k-1}` to the next stage.
    pub truncate_prev_weights: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            j: 20,
            lambda: 0.5,
            lr: 0.01,
            max_inner_iters: 2000,
            rel_tol: 1e-5,
            window: 5,
            seed: 0,
            truncate_prev_weights: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.j == 0 {
            return Err(Error::invalid("basis size J must be at least 1"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("ridge strength must be finite and non-negative"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.rel_tol > 0.0) || self.window == 0 || self.max_inner_iters == 0 {
            return Err(Error::invalid(
                "rel_tol, window and max_inner_iters must be positive",
            ));
        }
        Ok(())
    }
}

/// Per-projection optimisation record.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProjectionDiagnostics {
    /// Loss at each profiled `β` (one entry per inner iteration).
    pub losses: Vec<f64>,
    /// Loss at the new `(a, γ)` but the previous iteration's `β`, i.e. just
    /// before re-profiling. `pre_profile[t] >= losses[t]` for `t >= 1`.
    pub pre_profile: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate_init: bool,
    /// Largest distance any center moved from its initial value.
    pub center_drift: f64,
}

#[derive(Debug, Clone)]
pub struct ProjectionFit {
    pub projection: Projection,
    pub diagnostics: ProjectionDiagnostics,
}

/// Fits one factor against the stage weights, alternating a closed-form `β`
/// profile with one Adam step on `(a, γ)` followed by renormalising `a`.
pub fn fit_stage(stage: &Stage, cfg: &FitConfig, rng: &mut SeededRng) -> Result<ProjectionFit> {
    cfg.validate()?;
    let d = stage.dim();
    let mut a: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let na = norm(&a);
    if na == 0.0 {
        a[0] = 1.0;
    } else {
        a.iter_mut().for_each(|v| *v /= na);
    }
    let projected: Vec<f64> = stage
        .xq
        .row_iter()
        .chain(stage.xp.row_iter())
        .map(|x| crate::numeric::dot(x, &a))
        .collect();
    let init = init_centers(rng, cfg.j, &projected);
    let mut basis = init.basis;
    let initial_centers = basis.centers().to_vec();

    let mut diag = ProjectionDiagnostics {
        degenerate_init: init.degenerate,
        ..Default::default()
    };
    let mut adam = AdamState::new(d + cfg.j);
    let mut params = vec![0.0; d + cfg.j];
    let mut prev_beta: Option<Vec<f64>> = None;

    let beta = loop {
        let ev = Evaluated::new(stage, &a, &basis);
        let prof = ev.profile(cfg.lambda)?;
        if let Some(pb) = &prev_beta {
            diag.pre_profile.push(prof.loss_at(pb));
        }
        let (beta, loss) = (prof.beta, prof.loss);
        diag.losses.push(loss);
        diag.iterations += 1;
        let t = diag.losses.len();
        if t > cfg.window {
            let old = diag.losses[t - 1 - cfg.window];
            if (loss - old).abs() <= cfg.rel_tol * old.abs().max(1e-12) {
                diag.converged = true;
                break beta;
            }
        }
        if t >= cfg.max_inner_iters {
            break beta;
        }
        let (ga, gg) = ev.grad(&beta);
        params[..d].copy_from_slice(&a);
        params[d..].copy_from_slice(basis.centers());
        let grads: Vec<f64> = ga.into_iter().chain(gg).collect();
        adam.step(&mut params, &grads, cfg.lr)?;
        let np = norm(&params[..d]);
        if !(np > 0.0) || !np.is_finite() {
            return Err(Error::DegenerateProjection);
        }
        a.iter_mut()
            .zip(&params[..d])
            .for_each(|(dst, v)| *dst = v / np);
        basis.centers_mut().copy_from_slice(&params[d..]);
        prev_beta = Some(beta);
    };

    let ev = Evaluated::new(stage, &a, &basis);
    let floor = ev
        .raw_values(&beta)
        .into_iter()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return Err(Error::DegenerateProjection);
    }
    diag.center_drift = basis
        .centers()
        .iter()
        .zip(&initial_centers)
        .map(|(c, c0)| (c - c0).abs())
        .fold(0.0, f64::max);
    let projection = canonicalize(&Projection {
        a,
        basis,
        beta,
        floor,
    });
    Ok(ProjectionFit {
        projection,
        diagnostics: diag,
    })
}

/// Value of the previous model used as a stage weight.
fn weight_factor(p: &Projection, x: &[f64], truncate: bool) -> f64 {
    if truncate {
        p.factor(x)
    } else {
        p.raw(x)
    }
}

/// Fits the next factor of `prev` on the given samples.
pub fn fit_projection(
    prev: &PPRatioModel,
    xq: &DenseMatrix,
    xp: &DenseMatrix,
    cfg: &FitConfig,
) -> Result<ProjectionFit> {
    if xq.rows() < 2 || xp.rows() < 2 {
        return Err(Error::invalid("each sample needs at least two rows"));
    }
    let weights = |x: &DenseMatrix| -> Vec<f64> {
        x.row_iter()
            .map(|r| {
                prev.projections
                    .iter()
                    .map(|p| weight_factor(p, r, cfg.truncate_prev_weights))
                    .product()
            })
            .collect()
    };
    let (wq, wp) = (weights(xq), weights(xp));
    let stage = Stage::new(xq, xp, &wq, &wp)?;
    let mut rng = SeededRng::derived(cfg.seed, &[prev.k() as u64]);
    fit_stage(&stage, cfg, &mut rng)
}

/// Incremental fitter that keeps the stage weights of the current model so
/// factors can be added one at a time.
#[derive(Debug, Clone)]
pub struct PPFitter<'a> {
    xp: &'a DenseMatrix,
    xq: &'a DenseMatrix,
    cfg: FitConfig,
    model: PPRatioModel,
    wq: Vec<f64>,
    wp: Vec<f64>,
    diagnostics: Vec<ProjectionDiagnostics>,
}

impl<'a> PPFitter<'a> {
    pub fn new(xp: &'a DenseMatrix, xq: &'a DenseMatrix, cfg: FitConfig) -> Result<Self> {
        cfg.validate()?;
        if xp.rows() == 0 || xq.rows() == 0 {
            return Err(Error::invalid("both samples must be non-empty"));
        }
        if xp.cols() != xq.cols() {
            return Err(Error::dims(xq.cols(), xp.cols()));
        }
        if xq.rows() < 2 || xp.rows() < 2 {
            return Err(Error::invalid("each sample needs at least two rows"));
        }
        Ok(Self {
            xp,
            xq,
            model: PPRatioModel::constant(xp.cols()),
            wq: vec![1.0; xq.rows()],
            wp: vec![1.0; xp.rows()],
            diagnostics: Vec::new(),
            cfg,
        })
    }

    pub fn model(&self) -> &PPRatioModel {
        &self.model
    }

    pub fn into_model(self) -> PPRatioModel {
        self.model
    }

    pub fn diagnostics(&self) -> &[ProjectionDiagnostics] {
        &self.diagnostics
    }

    /// Adds one projection, returning its final training loss.
    pub fn grow(&mut self) -> Result<f64> {
        let stage = Stage::new(self.xq, self.xp, &self.wq, &self.wp)?;
        let mut rng = SeededRng::derived(self.cfg.seed, &[self.model.k() as u64]);
        let fit = fit_stage(&stage, &self.cfg, &mut rng)?;
        let truncate = self.cfg.truncate_prev_weights;
        let p = &fit.projection;
        for (w, x) in self.wq.iter_mut().zip(self.xq.row_iter()) {
            *w *= weight_factor(p, x, truncate);
        }
        for (w, x) in self.wp.iter_mut().zip(self.xp.row_iter()) {
            *w *= weight_factor(p, x, truncate);
        }
        let loss = *fit.diagnostics.losses.last().expect("at least one iteration");
        self.model.push(fit.projection)?;
        self.diagnostics.push(fit.diagnostics);
        Ok(loss)
    }
}

/// Fits `k` projections sequentially.
pub fn fit(xp: &DenseMatrix, xq: &DenseMatrix, cfg: &FitConfig, k: usize) -> Result<PPRatioModel> {
    let mut fitter = PPFitter::new(xp, xq, cfg.clone())?;
    for _ in 0..k {
        fitter.grow()?;
    }
    Ok(fitter.into_model())
}
