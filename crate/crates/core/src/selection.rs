//! K-fold cross-validation, grid search and greedy growth of the number of
//! projections.
//!
//! Every method is scored by the same held-out squared loss
//! `mean_q r̂² − 2 mean_p r̂`. ppDRE grid points grow one projection at a time
//! on every training fold in lockstep; growth stops once the fold-mean loss
//! has failed to improve for `patience` consecutive steps. A step improves
//! when its mean gain over the best `K` so far exceeds `min_improvement` and,
//! with `se_rule`, the standard error of the per-fold gains.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    kliep_fit, logistic_ratio_fit, median_distance, ulsif_fit, KliepConfig, LogisticConfig,
    MAX_CENTERS,
};
use crate::error::{Error, Result};
use crate::model::RatioModel;
use crate::numeric::{derive_seed, mean, variance, DenseMatrix, SeededRng};
use crate::par;
use crate::pp::{FitConfig, PPFitter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ppdre,
    Ulsif,
    Kliep,
    Logistic,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ppdre, Method::Ulsif, Method::Kliep, Method::Logistic];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Ppdre => "ppdre",
            Method::Ulsif => "ulsif",
            Method::Kliep => "kliep",
            Method::Logistic => "logistic",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method `{s}` (expected one of ppdre, ulsif, kliep, logistic)"
                ))
            })
    }
}

/// Row-to-fold assignment for both samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub p: Vec<usize>,
    pub q: Vec<usize>,
}

fn assign(n: usize, k: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut folds = vec![0; n];
    for (pos, i) in rng.permutation(n).into_iter().enumerate() {
        folds[i] = pos % k;
    }
    folds
}

/// Independent balanced random partitions of both samples into `k` folds.
pub fn kfold_split(n_p: usize, n_q: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::invalid("fold count must be at least 2"));
    }
    if n_p < k || n_q < k {
        return Err(Error::invalid(format!(
            "cannot split samples of sizes {n_p} and {n_q} into {k} folds"
        )));
    }
    let mut rng = SeededRng::derived(seed, &[0x666f_6c64]);
    let p = assign(n_p, k, &mut rng);
    let q = assign(n_q, k, &mut rng);
    Ok(FoldAssignment { k, seed, p, q })
}

/// Training and held-out parts of both samples for one fold.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub train_p: DenseMatrix,
    pub train_q: DenseMatrix,
    pub val_p: DenseMatrix,
    pub val_q: DenseMatrix,
}

impl FoldAssignment {
    pub fn split(&self, xp: &DenseMatrix, xq: &DenseMatrix, fold: usize) -> FoldData {
        let part = |labels: &[usize], held: bool| -> Vec<usize> {
            (0..labels.len()).filter(|&i| (labels[i] == fold) == held).collect()
        };
        FoldData {
            train_p: xp.select_rows(&part(&self.p, false)),
            train_q: xq.select_rows(&part(&self.q, false)),
            val_p: xp.select_rows(&part(&self.p, true)),
            val_q: xq.select_rows(&part(&self.q, true)),
        }
    }

    pub fn fold_sizes(&self) -> (Vec<usize>, Vec<usize>) {
        let count = |labels: &[usize]| {
            let mut c = vec![0; self.k];
            labels.iter().for_each(|&f| c[f] += 1);
            c
        };
        (count(&self.p), count(&self.q))
    }
}

/// `(1/n_q) Σ r̂(x_q)² − (2/n_p) Σ r̂(x_p)` from precomputed evaluations.
pub fn validation_loss_values(rq: &[f64], rp: &[f64]) -> f64 {
    let q = rq.iter().map(|r| r * r).sum::<f64>() / rq.len() as f64;
    let p = rp.iter().sum::<f64>() / rp.len() as f64;
    q - 2.0 * p
}

/// Held-out squared loss of a fitted model, without any ridge term.
pub fn validation_loss(model: &RatioModel, val_p: &DenseMatrix, val_q: &DenseMatrix) -> Result<f64> {
    if val_p.rows() == 0 || val_q.rows() == 0 {
        return Err(Error::invalid("held-out sets must be non-empty"));
    }
    Ok(validation_loss_values(
        &model.evaluate_rows(val_q)?,
        &model.evaluate_rows(val_p)?,
    ))
}

/// One candidate hyperparameter setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum GridPoint {
    Ppdre {
        j: usize,
        lambda: f64,
        lr: f64,
        /// Fixed projection count; `None` selects it by greedy growth.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
    },
    Ulsif {
        sigma: f64,
        lambda: f64,
    },
    Kliep {
        sigma: f64,
    },
    Logistic,
}

impl GridPoint {
    pub fn method(&self) -> Method {
        match self {
            GridPoint::Ppdre { .. } => Method::Ppdre,
            GridPoint::Ulsif { .. } => Method::Ulsif,
            GridPoint::Kliep { .. } => Method::Kliep,
            GridPoint::Logistic => Method::Logistic,
        }
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridPoint::Ppdre { j, lambda, lr, k } => {
                write!(f, "ppdre(J={j}, lambda={lambda}, lr={lr}")?;
                if let Some(k) = k {
                    write!(f, ", K={k}")?;
                }
                f.write_str(")")
            }
            GridPoint::Ulsif { sigma, lambda } => write!(f, "ulsif(sigma={sigma:.4}, lambda={lambda})"),
            GridPoint::Kliep { sigma } => write!(f, "kliep(sigma={sigma:.4})"),
            GridPoint::Logistic => f.write_str("logistic"),
        }
    }
}

/// ppDRE search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpdreGrid {
    /// Projection counts; greedy growth uses the largest as `K_max`.
    pub k: Vec<usize>,
    pub j: Vec<usize>,
    pub lambda: Vec<f64>,
    pub lr: Vec<f64>,
}

impl PpdreGrid {
    /// The full published search grid.
    pub fn table4() -> Self {
        Self {
            k: vec![5, 10, 15],
            j: vec![20, 50, 70, 100, 150],
            lambda: vec![0.5, 1.0, 5.0, 10.0],
            lr: vec![0.001, 0.01, 0.1],
        }
    }

    /// A subset of [`PpdreGrid::table4`] small enough for single-core runs.
    pub fn desk() -> Self {
        Self {
            k: vec![5],
            j: vec![150],
            lambda: vec![0.5],
            lr: vec![0.01, 0.1],
        }
    }

    pub fn k_max(&self) -> usize {
        self.k.iter().copied().max().unwrap_or(1)
    }

    /// Grid points in `J`, `λ`, `δ` order; with `grid_k` each is also
    /// crossed with every `K`.
    pub fn points(&self, grid_k: bool) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &j in &self.j {
            for &lambda in &self.lambda {
                for &lr in &self.lr {
                    if grid_k {
                        for &k in &self.k {
                            out.push(GridPoint::Ppdre { j, lambda, lr, k: Some(k) });
                        }
                    } else {
                        out.push(GridPoint::Ppdre { j, lambda, lr, k: None });
                    }
                }
            }
        }
        out
    }
}

impl Default for PpdreGrid {
    fn default() -> Self {
        Self::desk()
    }
}

/// Bandwidths are multiples of the median pairwise distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelGrid {
    pub sigma_scale: Vec<f64>,
    pub lambda: Vec<f64>,
    pub centers: usize,
}

impl Default for KernelGrid {
    fn default() -> Self {
        Self {
            sigma_scale: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            lambda: vec![1e-3, 1e-2, 0.1, 1.0, 10.0],
            centers: MAX_CENTERS,
        }
    }
}

/// Search spaces and fixed settings for every method.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    pub ppdre: PpdreGrid,
    pub ulsif: KernelGrid,
    /// Only `sigma_scale` and `centers` apply to KLIEP.
    pub kliep: KernelGrid,
    pub kliep_solver: KliepConfig,
    pub logistic: LogisticConfig,
}

/// Settings shared by every selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectOptions {
    pub folds: usize,
    pub patience: usize,
    pub min_improvement: f64,
    /// Also require the mean fold gain of a new projection to exceed its
    /// standard error across folds.
    pub se_rule: bool,
    /// Treat the `K` values of the ppDRE grid as ordinary grid values instead
    /// of growing `K` greedily.
    pub grid_k: bool,
    /// Inner-loop settings; `j`, `lambda`, `lr` and `seed` are overridden per
    /// grid point.
    pub fit: FitConfig,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            patience: 1,
            min_improvement: 1e-6,
            se_rule: true,
            grid_k: false,
            fit: FitConfig::default(),
        }
    }
}

impl Grids {
    /// Concrete grid points for `method` on this data.
    pub fn points(&self, method: Method, xp: &DenseMatrix, xq: &DenseMatrix, grid_k: bool) -> Vec<GridPoint> {
        match method {
            Method::Ppdre => self.ppdre.points(grid_k),
            Method::Ulsif => {
                let md = median_distance(xp, xq);
                let mut out = Vec::new();
                for &s in &self.ulsif.sigma_scale {
                    for &lambda in &self.ulsif.lambda {
                        out.push(GridPoint::Ulsif { sigma: md * s, lambda });
                    }
                }
                out
            }
            Method::Kliep => {
                let md = median_distance(xp, xq);
                self.kliep
                    .sigma_scale
                    .iter()
                    .map(|&s| GridPoint::Kliep { sigma: md * s })
                    .collect()
            }
            Method::Logistic => vec![GridPoint::Logistic],
        }
    }
}

fn ppdre_config(base: &FitConfig, j: usize, lambda: f64, lr: f64, seed: u64) -> FitConfig {
    FitConfig {
        j,
        lambda,
        lr,
        seed,
        ..base.clone()
    }
}

/// Fits one grid point on the given data. ppDRE points need `k`.
pub fn fit_point(
    point: &GridPoint,
    xp: &DenseMatrix,
    xq: &DenseMatrix,
    k: Option<usize>,
    grids: &Grids,
    opts: &SelectOptions,
    seed: u64,
) -> Result<RatioModel> {
    match *point {
        GridPoint::Ppdre { j, lambda, lr, k: fixed } => {
            let k = fixed.or(k).ok_or_else(|| Error::invalid("projection count required"))?;
            let cfg = ppdre_config(&opts.fit, j, lambda, lr, seed);
            Ok(RatioModel::Ppdre(crate::pp::fit(xp, xq, &cfg, k)?))
        }
        GridPoint::Ulsif { sigma, lambda } => {
            let b = grids.ulsif.centers.min(xp.rows());
            Ok(RatioModel::Ulsif(ulsif_fit(xp, xq, sigma, lambda, b, seed)?.model))
        }
        GridPoint::Kliep { sigma } => {
            let b = grids.kliep.centers.min(xp.rows());
            Ok(RatioModel::Kliep(kliep_fit(xp, xq, sigma, b, &grids.kliep_solver, seed)?.model))
        }
        GridPoint::Logistic => Ok(RatioModel::Logistic(
            logistic_ratio_fit(xp, xq, &grids.logistic, seed)?.model,
        )),
    }
}

/// Whether per-fold validation losses `new` beat `best` by enough to accept
/// another projection.
fn improves(best: &[f64], new: &[f64], opts: &SelectOptions) -> bool {
    let gains: Vec<f64> = best.iter().zip(new).map(|(b, l)| b - l).collect();
    let se = if opts.se_rule && gains.len() > 1 {
        // sample standard deviation over √F
        (variance(&gains) / (gains.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    mean(&gains) > opts.min_improvement.max(se)
}

/// Fold-mean validation losses along a greedy growth path.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthPath {
    /// `losses[k-1]` is the fold-mean loss with `k` projections.
    pub losses: Vec<f64>,
    /// Running minimum of `losses`.
    pub best_so_far: Vec<f64>,
    pub k_star: usize,
}

/// Grows projections on every training fold in lockstep.
///
/// With `stop_early` growth ends once `patience` consecutive steps fail to
/// improve the best loss by more than `min_improvement`; otherwise it runs to
/// `k_max`.
fn growth_path(
    folds: &[FoldData],
    cfg_for_fold: impl Fn(usize) -> FitConfig + Sync,
    k_max: usize,
    opts: &SelectOptions,
    stop_early: bool,
) -> Result<GrowthPath> {
    if k_max == 0 {
        return Err(Error::invalid("K_max must be at least 1"));
    }
    let mut fitters = folds
        .iter()
        .enumerate()
        .map(|(f, d)| PPFitter::new(&d.train_p, &d.train_q, cfg_for_fold(f)))
        .collect::<Result<Vec<_>>>()?;
    let mut losses = Vec::new();
    let mut best_so_far: Vec<f64> = Vec::new();
    let (mut running, mut k_star, mut stale) = (f64::INFINITY, 0, 0);
    let mut best_folds: Vec<f64> = Vec::new();
    for k in 1..=k_max {
        let results: Vec<Result<f64>> = {
            let cells: Vec<std::sync::Mutex<&mut PPFitter>> =
                fitters.iter_mut().map(std::sync::Mutex::new).collect();
            par::map_indices(folds.len(), |f| {
                let mut fitter = cells[f].lock().expect("fold lock");
                fitter.grow()?;
                let model = RatioModel::Ppdre(fitter.model().clone());
                validation_loss(&model, &folds[f].val_p, &folds[f].val_q)
            })
        };
        let fold_losses = results.into_iter().collect::<Result<Vec<_>>>()?;
        let m = mean(&fold_losses);
        losses.push(m);
        if best_folds.is_empty() || improves(&best_folds, &fold_losses, opts) {
            k_star = k;
            stale = 0;
            best_folds = fold_losses;
        } else {
            stale += 1;
        }
        running = running.min(m);
        best_so_far.push(running);
        if stop_early && stale >= opts.patience.max(1) {
            break;
        }
    }
    // the first step always counts as an improvement over +inf
    Ok(GrowthPath {
        losses,
        best_so_far,
        k_star: k_star.max(1),
    })
}

/// Result of choosing `K` for one ppDRE setting.
#[derive(Debug, Clone)]
pub struct KSelection {
    pub k_star: usize,
    pub path: GrowthPath,
    pub model: RatioModel,
}

/// Chooses the number of projections for one ppDRE setting by greedy growth
/// under cross-validation, then refits `K*` projections on all data.
#[allow(non_snake_case)]
pub fn select_K(
    point: &GridPoint,
    xp: &DenseMatrix,
    xq: &DenseMatrix,
    k_max: usize,
    folds: &FoldAssignment,
    opts: &SelectOptions,
    seed: u64,
) -> Result<KSelection> {
    let GridPoint::Ppdre { j, lambda, lr, .. } = *point else {
        return Err(Error::invalid("select_K needs a ppdre grid point"));
    };
    let data: Vec<FoldData> = (0..folds.k).map(|f| folds.split(xp, xq, f)).collect();
    let path = growth_path(
        &data,
        |f| ppdre_config(&opts.fit, j, lambda, lr, derive_seed(seed, &[0, f as u64])),
        k_max,
        opts,
        true,
    )?;
    let cfg = ppdre_config(&opts.fit, j, lambda, lr, refit_seed(seed));
    let model = RatioModel::Ppdre(crate::pp::fit(xp, xq, &cfg, path.k_star)?);
    Ok(KSelection {
        k_star: path.k_star,
        path,
        model,
    })
}

fn refit_seed(seed: u64) -> u64 {
    derive_seed(seed, &[u64::MAX])
}

/// One row of the grid-search table.
#[derive(Debug, Clone)]
pub struct GridRow {
    pub point: GridPoint,
    /// Fold-mean validation loss; `None` when the point failed to fit.
    pub mean_loss: Option<f64>,
    /// Selected projection count for greedy ppDRE points.
    pub k_star: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: usize,
    pub table: Vec<GridRow>,
}

impl GridResult {
    pub fn best_row(&self) -> &GridRow {
        &self.table[self.best]
    }
}

fn evaluate_point(
    idx: usize,
    point: &GridPoint,
    data: &[FoldData],
    grids: &Grids,
    opts: &SelectOptions,
    k_max: usize,
    seed: u64,
) -> Result<(f64, Option<usize>)> {
    let fold_seed = |f: usize| derive_seed(seed, &[idx as u64, f as u64]);
    if let GridPoint::Ppdre { j, lambda, lr, k } = *point {
        let target = k.unwrap_or(k_max);
        let path = growth_path(
            data,
            |f| ppdre_config(&opts.fit, j, lambda, lr, fold_seed(f)),
            target,
            opts,
            k.is_none(),
        )?;
        return Ok(match k {
            Some(k) => (path.losses[k - 1], Some(k)),
            None => (path.losses[path.k_star - 1], Some(path.k_star)),
        });
    }
    let losses = par::map_indices(data.len(), |f| {
        let d = &data[f];
        let model = fit_point(point, &d.train_p, &d.train_q, None, grids, opts, fold_seed(f))?;
        validation_loss(&model, &d.val_p, &d.val_q)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((mean(&losses), None))
}

/// Scores every grid point by fold-mean validation loss and picks the
/// smallest; ties go to the earliest point.
pub fn grid_search(
    points: &[GridPoint],
    xp: &DenseMatrix,
    xq: &DenseMatrix,
    folds: &FoldAssignment,
    grids: &Grids,
    opts: &SelectOptions,
    seed: u64,
) -> Result<GridResult> {
    if points.is_empty() {
        return Err(Error::invalid("grid must contain at least one point"));
    }
    let data: Vec<FoldData> = (0..folds.k).map(|f| folds.split(xp, xq, f)).collect();
    let k_max = grids.ppdre.k_max();
    let outcomes = par::map_indices(points.len(), |i| {
        evaluate_point(i, &points[i], &data, grids, opts, k_max, seed)
    });
    let table: Vec<GridRow> = points
        .iter()
        .zip(outcomes)
        .map(|(p, o)| match o {
            Ok((loss, k)) if loss.is_finite() => GridRow {
                point: p.clone(),
                mean_loss: Some(loss),
                k_star: k,
                error: None,
            },
            Ok((loss, _)) => GridRow {
                point: p.clone(),
                mean_loss: None,
                k_star: None,
                error: Some(format!("non-finite validation loss {loss}")),
            },
            Err(e) => GridRow {
                point: p.clone(),
                mean_loss: None,
                k_star: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in table.iter().enumerate() {
        if let Some(l) = row.mean_loss {
            if best.is_none_or(|(_, b)| l < b) {
                best = Some((i, l));
            }
        }
    }
    match best {
        Some((best, _)) => Ok(GridResult { best, table }),
        None => Err(Error::AllGridPointsFailed(
            table
                .iter()
                .map(|r| format!("{}: {}", r.point, r.error.as_deref().unwrap_or("failed")))
                .collect(),
        )),
    }
}

/// Outcome of the full protocol for one method.
#[derive(Debug, Clone)]
pub struct Selected {
    pub grid: GridResult,
    pub model: RatioModel,
}

/// Grid search under k-fold CV followed by a refit of the winner on all data.
pub fn select_and_fit(
    method: Method,
    xp: &DenseMatrix,
    xq: &DenseMatrix,
    grids: &Grids,
    opts: &SelectOptions,
    seed: u64,
) -> Result<Selected> {
    let folds = kfold_split(xp.rows(), xq.rows(), opts.folds, seed)?;
    let points = grids.points(method, xp, xq, opts.grid_k);
    let grid = grid_search(&points, xp, xq, &folds, grids, opts, seed)?;
    let row = grid.best_row();
    log::info!(
        "{method}: selected {} (validation loss {:.6})",
        row.point,
        row.mean_loss.unwrap_or(f64::NAN)
    );
    let model = fit_point(&row.point, xp, xq, row.k_star, grids, opts, refit_seed(seed))?;
    Ok(Selected { grid, model })
}
