//! Sequential against data-parallel execution of the hot paths.
//!
//! Run with `cargo bench -p ppdre --bench exec_modes`. Both modes produce
//! identical bits; this only measures the cost.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ppdre::basis::GaussianBasis;
use ppdre::numeric::{standard_normal, SeededRng};
use ppdre::par::{set_exec_mode, ExecMode};
use ppdre::pp::{fit, loss_grad, profile_beta, FitConfig, Stage};
use ppdre::RatioModel;

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn stage_kernels(c: &mut Criterion) {
    let mut rng = SeededRng::new(1);
    let (n, d, j) = (8000, 5, 100);
    let xq = standard_normal(&mut rng, n, d);
    let xp = standard_normal(&mut rng, n, d);
    let ones = vec![1.0; n];
    let stage = Stage::new(&xq, &xp, &ones, &ones).unwrap();
    let a = vec![1.0 / (d as f64).sqrt(); d];
    let basis = GaussianBasis::new((0..j).map(|i| -3.0 + 6.0 * i as f64 / (j - 1) as f64).collect());
    let beta = profile_beta(&a, &basis, 0.5, &stage).unwrap();

    let mut g = c.benchmark_group("stage");
    g.sample_size(20);
    for (name, mode) in MODES {
        set_exec_mode(mode);
        g.bench_with_input(BenchmarkId::new("profile_beta", name), &mode, |b, _| {
            b.iter(|| profile_beta(black_box(&a), &basis, 0.5, &stage).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("loss_grad", name), &mode, |b, _| {
            b.iter(|| loss_grad(black_box(&a), &basis, &beta, &stage).unwrap())
        });
    }
    g.finish();
    set_exec_mode(ExecMode::Parallel);
}

fn fit_and_evaluate(c: &mut Criterion) {
    let mut rng = SeededRng::new(2);
    let xq = standard_normal(&mut rng, 3000, 3);
    let xp = standard_normal(&mut rng, 3000, 3);
    let cfg = FitConfig {
        j: 40,
        max_inner_iters: 25,
        ..Default::default()
    };
    let model = RatioModel::Ppdre(fit(&xp, &xq, &cfg, 2).unwrap());
    let pts = standard_normal(&mut rng, 20_000, 3);

    let mut g = c.benchmark_group("model");
    g.sample_size(10);
    for (name, mode) in MODES {
        set_exec_mode(mode);
        g.bench_with_input(BenchmarkId::new("fit_k2", name), &mode, |b, _| {
            b.iter(|| fit(black_box(&xp), &xq, &cfg, 2).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("evaluate_rows", name), &mode, |b, _| {
            b.iter(|| model.evaluate_rows(black_box(&pts)).unwrap())
        });
    }
    g.finish();
    set_exec_mode(ExecMode::Parallel);
}

criterion_group!(benches, stage_kernels, fit_and_evaluate);
criterion_main!(benches);
