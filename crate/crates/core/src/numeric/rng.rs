//! Seeded randomness.
//!
//! The generator is ChaCha8 (`rand_chacha`), a counter-based stream cipher.
//! Golden values in the test suites depend on it, so it must not change.
//! Independent streams for parallel work are obtained with [`derive_seed`],
//! never by sharing one generator across tasks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::matrix::DenseMatrix;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A generator for the sub-task identified by `tags` under `seed`.
    pub fn derived(seed: u64, tags: &[u64]) -> Self {
        Self::new(derive_seed(seed, tags))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut self.inner);
        idx
    }

    /// `k` distinct indices from `0..n`, in draw order.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, n, k.min(n)).into_vec()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically derives a child seed from a parent seed and a path of tags
/// (grid-point index, fold index, ...).
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(seed), |acc, &t| mix(acc ^ mix(t)))
}

/// `n × d` matrix of i.i.d. standard normal draws.
pub fn standard_normal(rng: &mut SeededRng, n: usize, d: usize) -> DenseMatrix {
    let data = (0..n * d).map(|_| rng.normal()).collect();
    DenseMatrix::new(n, d, data).expect("normal draws are finite")
}

/// `n × d` matrix of i.i.d. uniform draws on `[lo, hi)`.
pub fn uniform_matrix(rng: &mut SeededRng, n: usize, d: usize, lo: f64, hi: f64) -> DenseMatrix {
    let data = (0..n * d).map(|_| rng.uniform_range(lo, hi)).collect();
    DenseMatrix::new(n, d, data).expect("uniform draws are finite")
}
