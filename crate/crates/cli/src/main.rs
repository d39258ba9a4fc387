use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ppdre::baselines::{kliep_fit, logistic_ratio_fit, ulsif_fit};
use ppdre::bench::{self, RunConfig, ScenarioSpec};
use ppdre::numeric::DenseMatrix;
use ppdre::pp::FitConfig;
use ppdre::selection::{select_and_fit, validation_loss, Method};
use ppdre::worlds::read_points_csv;
use ppdre::{Error, RatioModel};

#[derive(Parser)]
#[command(name = "ppdre", version, about = "Density ratio estimation benchmarks and model tool")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true, env = "PPDRE_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark configuration and write report.csv.
    Bench(BenchArgs),
    /// Fit a ratio model and save it as JSON.
    Fit(FitArgs),
    /// Evaluate a saved model on the rows of a CSV file.
    Eval(EvalArgs),
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Scenario name; replaces the configured scenario with its defaults
    /// unless the names agree.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, default_value = "ppdre")]
    method: String,
    /// Numerator sample CSV.
    #[arg(long, requires = "denominator", conflicts_with = "scenario")]
    numerator: Option<PathBuf>,
    /// Denominator sample CSV.
    #[arg(long, requires = "numerator")]
    denominator: Option<PathBuf>,
    /// Feature columns to use from the CSV inputs (default: all).
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
    /// Generate the samples from a named scenario instead.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Grids and selection settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fix the projection count and skip cross-validation (ppdre).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    j: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    /// Fix the kernel bandwidth and skip cross-validation (ulsif, kliep).
    #[arg(long)]
    sigma: Option<f64>,
    /// Output model path.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    points: PathBuf,
    /// Output CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(a) => bench_cmd(a, cli.workers),
        Command::Fit(a) => {
            init_workers(cli.workers);
            fit_cmd(a).map(|_| true)
        }
        Command::Eval(a) => eval_cmd(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn init_workers(workers: Option<usize>) {
    let n = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    ppdre::par::init_workers(n);
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    Ok(names.iter().map(|n| n.trim().parse()).collect::<Result<_, Error>>()?)
}

fn bench_cmd(args: BenchArgs, workers: Option<usize>) -> Result<bool> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(seeds) = args.seeds {
        cfg.seeds = seeds;
    }
    if let Some(m) = &args.methods {
        cfg.methods = parse_methods(m)?;
    }
    if let Some(name) = &args.scenario {
        if name != cfg.scenario.name() {
            cfg.scenario = ScenarioSpec::by_name(name)?;
        }
    }
    if workers.is_some() {
        cfg.workers = workers;
    }
    cfg.validate()?;
    init_workers(cfg.workers);

    let (outcome, files) = bench::run_bench(&cfg)?;
    println!("wrote {}", files.report.display());
    for g in &files.grids {
        println!("wrote {}", g.display());
    }
    for (seed, method, msg) in &outcome.failures {
        eprintln!("failed: seed {seed} {method}: {msg}");
    }
    Ok(outcome.success())
}

fn read_sample(path: &Path, columns: Option<&[String]>) -> Result<DenseMatrix> {
    let (header, m) = read_points_csv(path)?;
    let Some(cols) = columns else {
        return Ok(m);
    };
    let idx = cols
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| Error::MissingColumn(c.clone()))
        })
        .collect::<Result<Vec<_>, Error>>()
        .with_context(|| format!("reading {}", path.display()))?;
    let data = m.row_iter().flat_map(|r| idx.iter().map(move |&j| r[j])).collect();
    Ok(DenseMatrix::new(m.rows(), idx.len(), data)?)
}

fn fit_cmd(args: FitArgs) -> Result<()> {
    let method: Method = args.method.parse()?;
    let cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let (xp, xq) = match (&args.numerator, &args.denominator, &args.scenario) {
        (Some(p), Some(q), _) => {
            let cols = args.columns.as_deref();
            let xp = read_sample(p, cols)?;
            let xq = read_sample(q, cols)?;
            if xp.cols() != xq.cols() {
                bail!("numerator has {} columns, denominator {}", xp.cols(), xq.cols());
            }
            (xp, xq)
        }
        (_, _, Some(name)) => {
            let spec = if name == cfg.scenario.name() {
                cfg.scenario.clone()
            } else {
                ScenarioSpec::by_name(name)?
            };
            let csv = bench::load_csv(&spec)?;
            let data = bench::generate(&spec, args.seed, csv.as_ref())?;
            let (xp, xq) = data.samples();
            (xp.clone(), xq.clone())
        }
        _ => bail!("give either --numerator and --denominator, or --scenario"),
    };

    let seed = bench::method_seed(args.seed, method);
    let grids = cfg.effective_grids();
    let opts = cfg.select_options();
    let model = match (method, args.k, args.sigma) {
        (Method::Ppdre, Some(k), _) => {
            let fc = FitConfig {
                j: args.j.unwrap_or(grids.ppdre.j[0]),
                lambda: args.lambda.unwrap_or(grids.ppdre.lambda[0]),
                lr: args.lr.unwrap_or(grids.ppdre.lr[0]),
                seed,
                ..opts.fit.clone()
            };
            RatioModel::Ppdre(ppdre::pp::fit(&xp, &xq, &fc, k)?)
        }
        (Method::Ulsif, _, Some(sigma)) => {
            let b = grids.ulsif.centers.min(xp.rows());
            RatioModel::Ulsif(ulsif_fit(&xp, &xq, sigma, args.lambda.unwrap_or(0.1), b, seed)?.model)
        }
        (Method::Kliep, _, Some(sigma)) => {
            let b = grids.kliep.centers.min(xp.rows());
            RatioModel::Kliep(kliep_fit(&xp, &xq, sigma, b, &grids.kliep_solver, seed)?.model)
        }
        (Method::Logistic, _, _) => RatioModel::Logistic(logistic_ratio_fit(&xp, &xq, &grids.logistic, seed)?.model),
        _ => select_and_fit(method, &xp, &xq, &grids, &opts, seed)?.model,
    };
    model.save(&args.model)?;
    let loss = validation_loss(&model, &xp, &xq)?;
    let size = match &model {
        RatioModel::Ppdre(m) => format!("K={}", m.k()),
        RatioModel::Ulsif(m) | RatioModel::Kliep(m) => format!("b={}", m.centers.rows()),
        RatioModel::Logistic(m) => format!("d={}", m.d()),
    };
    println!("method={} {size} train_loss={loss:.6}", model.method());
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let model = RatioModel::load(&args.model)?;
    let (_, pts) = read_points_csv(&args.points)?;
    let mut out = String::from("r_hat\n");
    if pts.rows() > 0 {
        if pts.cols() != model.d() {
            return Err(Error::DimensionMismatch {
                expected: model.d(),
                found: pts.cols(),
                row: Some(1),
            })
            .with_context(|| format!("evaluating {}", args.points.display()));
        }
        for v in model.evaluate_rows(&pts)? {
            out.push_str(&format!("{v:.16e}\n"));
        }
    }
    match &args.out {
        Some(p) => std::fs::write(p, out).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(out.as_bytes())?,
    }
    Ok(())
}
