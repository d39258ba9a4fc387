//! Benchmark orchestration: generate each seed's data, select and fit every
//! method, score it with the scenario's metric and collect report rows.

mod config;

pub use config::{GridPreset, RunConfig, ScenarioSpec};

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::apps::{estimate_mi, fit_adrf, krr_cv_lambda, krr_fit, krr_predict_rows, KRR_LAMBDA_GRID};
use crate::error::{Error, Result};
use crate::metrics::{ase, clamp_positive, mae_mi, nmse, rmsle};
use crate::model::RatioModel;
use crate::numeric::{derive_seed, DenseMatrix, SeededRng};
use crate::report::{lattice, write_grid_dump, write_report, Metric, MetricRecord};
use crate::selection::{select_and_fit, Method};
use crate::worlds::{
    gen_covariate_shift, gen_dose_response, gen_friedman, gen_gaussian_pair, gen_mi_gaussian,
    gen_stabilized_weights, read_csv_dataset, Dataset, DoseResponseWorld, LabeledScenario, ShiftSplit,
};

/// Floor applied to baseline outputs before taking logs.
pub const CLAMP_FLOOR: f64 = 1e-12;

/// Data of one seed of a scenario.
#[derive(Debug, Clone)]
pub enum ScenarioData {
    Ratio(LabeledScenario),
    Dose {
        world: DoseResponseWorld,
        /// `(t_σ(i), x_i)` rows.
        xp: DenseMatrix,
        /// `(t_i, x_i)` rows.
        xq: DenseMatrix,
    },
    Shift(ShiftSplit),
}

impl ScenarioData {
    /// Numerator and denominator samples the ratio is fitted on.
    pub fn samples(&self) -> (&DenseMatrix, &DenseMatrix) {
        match self {
            ScenarioData::Ratio(s) => (&s.xp, &s.xq),
            ScenarioData::Dose { xp, xq, .. } => (xp, xq),
            ScenarioData::Shift(s) => (&s.test.x, &s.train.x),
        }
    }

    pub fn n(&self) -> usize {
        let (xp, xq) = self.samples();
        xp.rows() + xq.rows()
    }
}

/// Generates the data of `spec` for `seed`. `csv` carries the dataset of a
/// CSV scenario, read once per run.
pub fn generate(spec: &ScenarioSpec, seed: u64, csv: Option<&Dataset>) -> Result<ScenarioData> {
    Ok(match spec {
        ScenarioSpec::Toy2d { d, n_p, n_q } => ScenarioData::Ratio(gen_gaussian_pair(*d, *n_p, *n_q, seed)?),
        ScenarioSpec::StabilizedWeights { d_x, c_scale, n } => {
            ScenarioData::Ratio(gen_stabilized_weights(&vec![*c_scale; *d_x], *n, seed)?)
        }
        ScenarioSpec::MiGaussian { p, rho, n } => ScenarioData::Ratio(gen_mi_gaussian(*p, *rho, *n, seed)?),
        ScenarioSpec::DoseResponse { n, mc_n } => {
            let world = gen_dose_response(*n, seed, *mc_n)?;
            let xq = world.joint();
            let perm = SeededRng::derived(seed, &[0x646f_7365]).permutation(*n);
            let mut xp = xq.clone();
            for (i, &j) in perm.iter().enumerate() {
                xp.row_mut(i)[0] = world.t[j];
            }
            ScenarioData::Dose { world, xp, xq }
        }
        ScenarioSpec::CovariateShiftFriedman { n, noise_sd } => {
            let data = gen_friedman(*n, *noise_sd, seed)?;
            ScenarioData::Shift(gen_covariate_shift(&data, derive_seed(seed, &[0x7368_6966]))?)
        }
        ScenarioSpec::CovariateShiftCsv { .. } => {
            let data = csv.ok_or_else(|| Error::Config("CSV dataset not loaded".into()))?;
            ScenarioData::Shift(gen_covariate_shift(data, seed)?)
        }
    })
}

/// Reads the CSV of a CSV scenario, keeping only the named features.
pub fn load_csv(spec: &ScenarioSpec) -> Result<Option<Dataset>> {
    let ScenarioSpec::CovariateShiftCsv { path, target, features } = spec else {
        return Ok(None);
    };
    let full = read_csv_dataset(path, target)?;
    let mut idx = Vec::with_capacity(features.len());
    for f in features {
        let j = full
            .columns
            .iter()
            .position(|c| c == f)
            .ok_or_else(|| Error::MissingColumn(f.clone()))?;
        idx.push(j);
    }
    let data: Vec<f64> = full.x.row_iter().flat_map(|r| idx.iter().map(move |&j| r[j])).collect();
    Ok(Some(Dataset {
        x: DenseMatrix::new(full.len(), idx.len(), data)?,
        y: full.y,
        columns: features.clone(),
    }))
}

/// A model fitted during a run, kept for post-hoc checks.
#[derive(Debug, Clone)]
pub struct FittedRun {
    pub seed: u64,
    pub method: Method,
    pub model: RatioModel,
}

/// Heatmap dump: `(seed, method, points, truth, estimate)`.
pub type GridDump = (u64, String, DenseMatrix, Vec<f64>, Vec<f64>);

#[derive(Debug, Clone, Default)]
pub struct BenchOutcome {
    pub records: Vec<MetricRecord>,
    pub fitted: Vec<FittedRun>,
    /// `(seed, method, message)` of every failed run.
    pub failures: Vec<(u64, String, String)>,
    pub grids: Vec<GridDump>,
}

impl BenchOutcome {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }

    /// Values of `metric` for `method`, in seed order.
    pub fn values(&self, method: &str, metric: Metric) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.metric == metric && r.method.split(':').next() == Some(method))
            .map(|r| r.value)
            .collect()
    }
}

/// Per-method seed derived from the run seed, independent of method order.
pub fn method_seed(seed: u64, method: Method) -> u64 {
    let idx = Method::ALL.iter().position(|m| *m == method).expect("known method") as u64;
    derive_seed(seed, &[0x6d65_7468, idx])
}

struct Row<'a> {
    cfg: &'a RunConfig,
    seed: u64,
    n: usize,
}

impl Row<'_> {
    fn record(&self, method: &str, metric: Metric, value: f64, started: Instant) -> MetricRecord {
        MetricRecord {
            scenario: self.cfg.scenario.name().to_string(),
            method: method.to_string(),
            seed: self.seed,
            metric,
            value,
            n: self.n,
            runtime_s: if self.cfg.record_timing {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        }
    }
}

fn method_label(method: Method, clamped: bool) -> String {
    if clamped {
        format!("{method}:clamped")
    } else {
        method.to_string()
    }
}

/// Runs every method on one seed.
fn run_seed(cfg: &RunConfig, seed: u64, csv: Option<&Dataset>) -> BenchOutcome {
    let mut out = BenchOutcome::default();
    let data = match generate(&cfg.scenario, seed, csv) {
        Ok(d) => d,
        Err(e) => {
            for m in &cfg.methods {
                fail(&mut out, cfg, seed, 0, &m.to_string(), &e);
            }
            return out;
        }
    };
    let row = Row { cfg, seed, n: data.n() };
    let grids = cfg.effective_grids();
    let opts = cfg.select_options();
    let (xp, xq) = data.samples();

    for &method in &cfg.methods {
        let started = Instant::now();
        let result = select_and_fit(method, xp, xq, &grids, &opts, method_seed(seed, method))
            .and_then(|sel| score(cfg, &row, &data, method, &sel.model, started, &mut out).map(|_| sel.model));
        match result {
            Ok(model) => out.fitted.push(FittedRun { seed, method, model }),
            Err(e) => fail(&mut out, cfg, seed, row.n, method.name(), &e),
        }
    }

    // reference rows that need no ratio estimate
    let started = Instant::now();
    let reference = match &data {
        ScenarioData::Dose { world, .. } => {
            let uniform = vec![1.0; world.t.len()];
            dose_ase(world, &uniform).and_then(|u| {
                out.records.push(row.record("unweighted", Metric::Ase, u, started));
                let o = dose_ase(world, &world.true_weights())?;
                out.records.push(row.record("oracle", Metric::Ase, o, started));
                Ok(())
            })
        }
        ScenarioData::Shift(split) => shift_nmse(split, &vec![1.0; split.train.len()], seed)
            .map(|v| out.records.push(row.record("unweighted", Metric::Nmse, v, started))),
        ScenarioData::Ratio(_) => Ok(()),
    };
    if let Err(e) = reference {
        fail(&mut out, cfg, seed, row.n, "reference", &e);
    }
    out
}

fn fail(out: &mut BenchOutcome, cfg: &RunConfig, seed: u64, n: usize, method: &str, e: &Error) {
    log::error!("{} seed {seed} {method}: {e}", cfg.scenario.name());
    out.records.push(MetricRecord {
        scenario: cfg.scenario.name().to_string(),
        method: method.to_string(),
        seed,
        metric: Metric::Error,
        value: 0.0,
        n,
        runtime_s: 0.0,
    });
    out.failures.push((seed, method.to_string(), e.to_string()));
}

fn dose_ase(world: &DoseResponseWorld, weights: &[f64]) -> Result<f64> {
    let fit = fit_adrf(&world.t, &world.y, weights)?;
    ase(|t| fit.predict(t), |t| world.oracle.adrf(t), &world.t)
}

/// Test NMSE of kernel ridge regression trained with `weights`, the ridge
/// chosen by weighted cross-validation.
pub fn shift_nmse(split: &ShiftSplit, weights: &[f64], seed: u64) -> Result<f64> {
    let lambda = krr_cv_lambda(
        &split.train.x,
        &split.train.y,
        weights,
        &KRR_LAMBDA_GRID,
        5,
        derive_seed(seed, &[0x6b_7272]),
    )?;
    let model = krr_fit(&split.train.x, &split.train.y, weights, lambda)?;
    let pred = krr_predict_rows(&model, &split.test.x)?;
    nmse(&split.test.y, &pred)
}

fn score(
    cfg: &RunConfig,
    row: &Row<'_>,
    data: &ScenarioData,
    method: Method,
    model: &RatioModel,
    started: Instant,
    out: &mut BenchOutcome,
) -> Result<()> {
    match data {
        ScenarioData::Ratio(s) if s.scalar.is_some() => {
            let est = estimate_mi(model, &s.xp).or_else(|e| {
                // kernel baselines may return zero; their estimate uses the clamp
                if method == Method::Ppdre {
                    return Err(e);
                }
                let (v, _) = clamp_positive(&model.evaluate_rows(&s.xp)?, CLAMP_FLOOR);
                crate::apps::mean_log_ratio(&v)
            })?;
            let value = mae_mi(est, s.scalar.expect("checked"));
            out.records.push(row.record(method.name(), Metric::MaeMi, value, started));
        }
        ScenarioData::Ratio(s) => {
            let truth = s.truth.evaluate_rows(&s.xq)?;
            let raw = model.evaluate_rows(&s.xq)?;
            let (est, clamped) = clamp_positive(&raw, CLAMP_FLOOR);
            if clamped && method == Method::Ppdre {
                return Err(Error::NonPositiveEvaluation {
                    row: raw.iter().position(|v| !(*v > 0.0)).unwrap_or(0),
                    value: 0.0,
                });
            }
            let value = rmsle(&est, &truth)?;
            out.records
                .push(row.record(&method_label(method, clamped), Metric::Rmsle, value, started));
            if s.d() == 2 {
                let pts = lattice(-3.0, 3.0, cfg.grid_steps);
                let truth = s.truth.evaluate_rows(&pts)?;
                let est = model.evaluate_rows(&pts)?;
                out.grids.push((row.seed, method.to_string(), pts, truth, est));
            }
        }
        ScenarioData::Dose { world, xq, .. } => {
            let w = model.evaluate_rows(xq)?;
            let value = dose_ase(world, &w)?;
            out.records.push(row.record(method.name(), Metric::Ase, value, started));
        }
        ScenarioData::Shift(split) => {
            let w = model.evaluate_rows(&split.train.x)?;
            let value = shift_nmse(split, &w, row.seed)?;
            out.records.push(row.record(method.name(), Metric::Nmse, value, started));
        }
    }
    Ok(())
}

/// Runs the whole configuration in memory. Seeds run on the worker pool;
/// results are merged in seed order.
pub fn run(cfg: &RunConfig) -> Result<BenchOutcome> {
    cfg.validate()?;
    let csv = load_csv(&cfg.scenario)?;
    let per_seed = crate::par::map_slice(&cfg.seeds, |&seed| run_seed(cfg, seed, csv.as_ref()));
    let mut out = BenchOutcome::default();
    for o in per_seed {
        out.records.extend(o.records);
        out.fitted.extend(o.fitted);
        out.failures.extend(o.failures);
        out.grids.extend(o.grids);
    }
    Ok(out)
}

/// Paths written by [`run_bench`].
#[derive(Debug, Clone)]
pub struct BenchFiles {
    pub report: PathBuf,
    pub grids: Vec<PathBuf>,
}

/// Runs the configuration and writes `report.csv` plus one heatmap dump per
/// 2-D fit into the output directory.
pub fn run_bench(cfg: &RunConfig) -> Result<(BenchOutcome, BenchFiles)> {
    let outcome = run(cfg)?;
    let files = write_outputs(&outcome, cfg.scenario.name(), &cfg.out)?;
    Ok((outcome, files))
}

pub fn write_outputs(outcome: &BenchOutcome, scenario: &str, dir: &Path) -> Result<BenchFiles> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let report = dir.join("report.csv");
    write_report(&outcome.records, &report)?;
    let mut grids = Vec::new();
    for (seed, method, pts, truth, est) in &outcome.grids {
        let path = dir.join(format!("grid_{scenario}_{method}_{seed}.csv"));
        write_grid_dump(&path, pts, truth, est)?;
        grids.push(path);
    }
    Ok(BenchFiles { report, grids })
}
