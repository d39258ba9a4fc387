//! Independent oracles shared by the integration suites. Nothing here calls
//! the library's own loss code; losses are recomputed from the definition
//! with `f64::exp`.

#![allow(dead_code)]

use ppdre::basis::GaussianBasis;
use ppdre::numeric::{standard_normal, DenseMatrix, SeededRng};
use ppdre::pp::Stage;

pub struct Tiny {
    pub xq: DenseMatrix,
    pub xp: DenseMatrix,
    pub wq: Vec<f64>,
    pub wp: Vec<f64>,
    pub a: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda: f64,
}

impl Tiny {
    /// `J ≤ max_j` centers, at most `max_n` rows per sample.
    pub fn random(seed: u64, max_n: usize, max_j: usize) -> Self {
        let mut rng = SeededRng::new(seed);
        let d = 1 + (rng.next_u64() % 3) as usize;
        let nq = 1 + (rng.next_u64() % max_n as u64) as usize;
        let np = 1 + (rng.next_u64() % max_n as u64) as usize;
        let j = 1 + (rng.next_u64() % max_j as u64) as usize;
        let xq = standard_normal(&mut rng, nq, d);
        let xp = standard_normal(&mut rng, np, d);
        let wq = (0..nq).map(|_| rng.uniform_range(0.5, 1.5)).collect();
        let wp = (0..np).map(|_| rng.uniform_range(0.5, 1.5)).collect();
        let mut a: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        a.iter_mut().for_each(|v| *v /= na);
        let gamma = (0..j).map(|_| rng.uniform_range(-1.5, 1.5)).collect();
        let lambda = rng.uniform_range(0.1, 2.0);
        Self { xq, xp, wq, wp, a, gamma, lambda }
    }

    pub fn stage(&self) -> Stage<'_> {
        Stage::new(&self.xq, &self.xp, &self.wq, &self.wp).unwrap()
    }

    pub fn basis(&self) -> GaussianBasis {
        GaussianBasis::new(self.gamma.clone())
    }

    /// `(1/n_q) Σ w_q² f² − (2/n_p) Σ w_p f + λ‖β‖²` with
    /// `f(x) = Σ_j β_j exp(−(aᵀx − γ_j)²/2)`.
    pub fn loss(&self, a: &[f64], gamma: &[f64], beta: &[f64]) -> f64 {
        let f = |x: &[f64]| {
            let z: f64 = a.iter().zip(x).map(|(u, v)| u * v).sum();
            gamma
                .iter()
                .zip(beta)
                .map(|(g, b)| b * (-(z - g) * (z - g) / 2.0).exp())
                .sum::<f64>()
        };
        let nq = self.xq.rows() as f64;
        let np = self.xp.rows() as f64;
        let q: f64 = self.xq.row_iter().zip(&self.wq).map(|(x, w)| w * w * f(x).powi(2)).sum::<f64>() / nq;
        let p: f64 = self.xp.row_iter().zip(&self.wp).map(|(x, w)| w * f(x)).sum::<f64>() / np;
        q - 2.0 * p + self.lambda * beta.iter().map(|b| b * b).sum::<f64>()
    }

    /// Minimizes [`Tiny::loss`] over `β` by coarse-to-fine grid search.
    pub fn brute_force_beta(&self) -> Vec<f64> {
        let j = self.gamma.len();
        let mut center = vec![0.0; j];
        let mut half = 40.0;
        let steps = 40i64;
        while half > 1e-6 {
            let h = half / steps as f64;
            let mut best = (f64::INFINITY, center.clone());
            let mut idx = vec![-steps; j];
            loop {
                let beta: Vec<f64> = center.iter().zip(&idx).map(|(c, &i)| c + i as f64 * h).collect();
                let l = self.loss(&self.a, &self.gamma, &beta);
                if l < best.0 {
                    best = (l, beta);
                }
                // odometer over the (2·steps + 1)^J lattice
                let mut k = 0;
                while k < j {
                    idx[k] += 1;
                    if idx[k] <= steps {
                        break;
                    }
                    idx[k] = -steps;
                    k += 1;
                }
                if k == j {
                    break;
                }
            }
            center = best.1;
            // keep a margin of several cells for tilted level sets
            half = 6.0 * h;
        }
        center
    }
}

pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let diff = got.iter().zip(want).map(|(g, w)| (g - w).powi(2)).sum::<f64>().sqrt();
    let scale = want.iter().map(|w| w * w).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

/// Central differences of `f` at `x`.
pub fn central_diff(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[i] += h;
            dn[i] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

/// Worst relative error of `loss_grad`, `eval_dz` and `eval_dgamma` against
/// central differences over `count` instances.
pub fn gradient_suite(count: u64, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..count {
        let inst = Tiny::random(seed.wrapping_add(s), 30, 6);
        let basis = inst.basis();
        let beta = ppdre::pp::profile_beta(&inst.a, &basis, inst.lambda, &inst.stage()).unwrap();
        let (ga, gg) = ppdre::pp::loss_grad(&inst.a, &basis, &beta, &inst.stage()).unwrap();
        let fa = central_diff(&inst.a, 1e-6, |a| inst.loss(a, &inst.gamma, &beta));
        let fg = central_diff(&inst.gamma, 1e-6, |g| inst.loss(&inst.a, g, &beta));
        worst = worst.max(rel_err(&ga, &fa)).max(rel_err(&gg, &fg));

        let z = SeededRng::new(s).uniform_range(-3.0, 3.0);
        let phi = |z: f64, g: &[f64]| -> Vec<f64> { g.iter().map(|c| (-(z - c) * (z - c) / 2.0).exp()).collect() };
        let dz: Vec<f64> = (0..inst.gamma.len())
            .map(|j| {
                let h = 1e-6;
                (phi(z + h, &inst.gamma)[j] - phi(z - h, &inst.gamma)[j]) / (2.0 * h)
            })
            .collect();
        worst = worst.max(rel_err(&basis.eval_dz(z), &dz));
        let dg: Vec<f64> = (0..inst.gamma.len())
            .map(|j| central_diff(&inst.gamma, 1e-6, |g| phi(z, g)[j])[j])
            .collect();
        worst = worst.max(rel_err(&basis.eval_dgamma(z), &dg));
    }
    worst
}

/// Worst per-coordinate gap between `profile_beta` and the brute-force
/// minimizer over `count` tiny instances.
pub fn profile_oracle(count: u64, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..count {
        let inst = Tiny::random(seed.wrapping_add(s), 8, 2);
        let got = ppdre::pp::profile_beta(&inst.a, &inst.basis(), inst.lambda, &inst.stage()).unwrap();
        let want = inst.brute_force_beta();
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    worst
}
