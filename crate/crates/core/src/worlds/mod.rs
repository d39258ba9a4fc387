//! Deterministic data generators with known truths.
//!
//! Ratio scenarios return a numerator sample `xp`, a denominator sample `xq`
//! and the exact ratio `p/q`. The dose-response and covariate-shift worlds
//! return raw data plus their own oracles.

mod dose;
mod shift;

pub use dose::{gen_dose_response, DoseOracle, DoseResponseWorld, DOSE_COVARIATES};
pub use shift::{gen_covariate_shift, gen_friedman, read_csv_dataset, read_points_csv, Dataset, ShiftSplit};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numeric::{dot, standard_normal, DenseMatrix, SeededRng};

/// Scenario name, parameters and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub name: String,
    pub params: Vec<(String, f64)>,
    pub seed: u64,
}

/// Closed-form density ratios of the synthetic scenarios.
#[derive(Debug, Clone, PartialEq)]
pub enum RatioTruth {
    /// `N(0, I_d)` over `N(0, 2 I_d)`.
    GaussianPair { d: usize },
    /// `f_T(t) / f_{T|X}(t | x)` for `T = cᵀX + ε`; rows are `(t, x)`.
    Stabilized { c: Vec<f64> },
    /// Joint over product density of `(u, v)` with `corr(u_i, v_i) = ρ`.
    MiGaussian { p: usize, rho: f64 },
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

impl RatioTruth {
    pub fn d(&self) -> usize {
        match self {
            RatioTruth::GaussianPair { d } => *d,
            RatioTruth::Stabilized { c } => c.len() + 1,
            RatioTruth::MiGaussian { p, .. } => 2 * p,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d() {
            return Err(Error::dims(self.d(), x.len()));
        }
        Ok(match self {
            RatioTruth::GaussianPair { d } => {
                2f64.powf(*d as f64 / 2.0) * (-dot(x, x) / 4.0).exp()
            }
            RatioTruth::Stabilized { c } => {
                let (t, cov) = (x[0], &x[1..]);
                normal_pdf(t, 0.0, 1.0 + dot(c, c)) / normal_pdf(t, dot(c, cov), 1.0)
            }
            RatioTruth::MiGaussian { p, rho } => {
                let (u, v) = x.split_at(*p);
                let s = 1.0 - rho * rho;
                let q: f64 = u
                    .iter()
                    .zip(v)
                    .map(|(a, b)| rho * rho * (a * a + b * b) - 2.0 * rho * a * b)
                    .sum();
                s.powf(-(*p as f64) / 2.0) * (-q / (2.0 * s)).exp()
            }
        })
    }

    pub fn evaluate_rows(&self, xs: &DenseMatrix) -> Result<Vec<f64>> {
        xs.row_iter().map(|r| self.evaluate(r)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LabeledScenario {
    pub xp: DenseMatrix,
    pub xq: DenseMatrix,
    pub truth: RatioTruth,
    /// Scalar target, when the scenario has one (mutual information).
    pub scalar: Option<f64>,
    pub descriptor: Descriptor,
}

impl LabeledScenario {
    pub fn d(&self) -> usize {
        self.xq.cols()
    }
}

fn descriptor(name: &str, params: &[(&str, f64)], seed: u64) -> Descriptor {
    Descriptor {
        name: name.to_string(),
        params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        seed,
    }
}

/// `xp ~ N(0, I_d)`, `xq ~ N(0, 2 I_d)`.
pub fn gen_gaussian_pair(d: usize, n_p: usize, n_q: usize, seed: u64) -> Result<LabeledScenario> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let mut rng = SeededRng::new(seed);
    let xp = standard_normal(&mut rng, n_p, d);
    let mut xq = standard_normal(&mut rng, n_q, d);
    let s = 2f64.sqrt();
    for i in 0..n_q {
        xq.row_mut(i).iter_mut().for_each(|v| *v *= s);
    }
    Ok(LabeledScenario {
        xp,
        xq,
        truth: RatioTruth::GaussianPair { d },
        scalar: None,
        descriptor: descriptor(
            "toy2d",
            &[("d", d as f64), ("n_p", n_p as f64), ("n_q", n_q as f64)],
            seed,
        ),
    })
}

/// Replaces the columns `cols` of each row by those of row `perm[i]`.
fn permute_columns(x: &DenseMatrix, cols: std::ops::Range<usize>, perm: &[usize]) -> DenseMatrix {
    let mut out = x.clone();
    for (i, &j) in perm.iter().enumerate() {
        let src = x.row(j)[cols.clone()].to_vec();
        out.row_mut(i)[cols.clone()].copy_from_slice(&src);
    }
    out
}

/// Treatment model `T = cᵀX + ε`. The denominator sample holds the joint rows
/// `(t_i, x_i)`, the numerator sample `(t_σ(i), x_i)` for a random permutation.
pub fn gen_stabilized_weights(c: &[f64], n: usize, seed: u64) -> Result<LabeledScenario> {
    if n < 2 {
        return Err(Error::invalid("need at least two rows"));
    }
    let d = c.len();
    let mut rng = SeededRng::new(seed);
    let x = standard_normal(&mut rng, n, d);
    let mut joint = DenseMatrix::zeros(n, d + 1);
    for i in 0..n {
        let t = dot(c, x.row(i)) + rng.normal();
        let row = joint.row_mut(i);
        row[0] = t;
        row[1..].copy_from_slice(x.row(i));
    }
    let perm = rng.permutation(n);
    let xp = permute_columns(&joint, 0..1, &perm);
    let norm_c = dot(c, c).sqrt();
    Ok(LabeledScenario {
        xp,
        xq: joint,
        truth: RatioTruth::Stabilized { c: c.to_vec() },
        scalar: None,
        descriptor: descriptor(
            "stabilized_weights",
            &[("d_x", d as f64), ("norm_c", norm_c), ("n", n as f64)],
            seed,
        ),
    })
}

/// `v_i = ρ u_i + √(1−ρ²) w_i`. The numerator sample is the joint `(u, v)`,
/// the denominator pairs each `u` with a permuted `v`. The scalar truth is
/// `−(p/2) ln(1−ρ²)`.
pub fn gen_mi_gaussian(p: usize, rho: f64, n: usize, seed: u64) -> Result<LabeledScenario> {
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid(format!("correlation must satisfy |rho| < 1, got {rho}")));
    }
    if p == 0 || n < 2 {
        return Err(Error::invalid("need p >= 1 and at least two rows"));
    }
    let mut rng = SeededRng::new(seed);
    let u = standard_normal(&mut rng, n, p);
    let w = standard_normal(&mut rng, n, p);
    let s = (1.0 - rho * rho).sqrt();
    let mut joint = DenseMatrix::zeros(n, 2 * p);
    for i in 0..n {
        let row = joint.row_mut(i);
        row[..p].copy_from_slice(u.row(i));
        for k in 0..p {
            row[p + k] = rho * u.get(i, k) + s * w.get(i, k);
        }
    }
    let perm = rng.permutation(n);
    let product = permute_columns(&joint, p..2 * p, &perm);
    Ok(LabeledScenario {
        xp: joint,
        xq: product,
        truth: RatioTruth::MiGaussian { p, rho },
        scalar: Some(mi_gaussian_truth(p, rho)),
        descriptor: descriptor("mi_gaussian", &[("p", p as f64), ("rho", rho), ("n", n as f64)], seed),
    })
}

pub fn mi_gaussian_truth(p: usize, rho: f64) -> f64 {
    -(p as f64) / 2.0 * (1.0 - rho * rho).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::mean;

    #[test]
    fn gaussian_pair_truth_values() {
        let t = RatioTruth::GaussianPair { d: 2 };
        assert!((t.evaluate(&[0.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        let v = t.evaluate(&[2.0, 0.0]).unwrap();
        assert!((v - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.7358).abs() < 1e-4);
        assert!(t.evaluate(&[1.0]).is_err());
    }

    #[test]
    fn gaussian_pair_truth_integrates_to_one() {
        let s = gen_gaussian_pair(2, 10, 100_000, 5).unwrap();
        let r = s.truth.evaluate_rows(&s.xq).unwrap();
        assert!((mean(&r) - 1.0).abs() < 0.02, "{}", mean(&r));
    }

    #[test]
    fn stabilized_truth_values() {
        let mut c = vec![0.0; 3];
        c[0] = 0.5;
        let t = RatioTruth::Stabilized { c };
        let v = t.evaluate(&[0.0, 0.0, 0.7, -0.3]).unwrap();
        assert!((v - 1.0 / 1.25f64.sqrt()).abs() < 1e-12);
        assert!((v - 0.8944).abs() < 1e-4);
        let indep = RatioTruth::Stabilized { c: vec![0.0; 2] };
        assert!((indep.evaluate(&[1.7, 3.0, -2.0]).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn stabilized_layout_and_permutation() {
        let s = gen_stabilized_weights(&[0.5, 0.5], 300, 3).unwrap();
        assert_eq!(s.d(), 3);
        assert_eq!(s.xp.cols(), 3);
        let sorted = |m: &DenseMatrix, j| {
            let mut v = m.column(j);
            v.sort_by(f64::total_cmp);
            v
        };
        for j in 0..3 {
            assert_eq!(sorted(&s.xp, j), sorted(&s.xq, j));
        }
        // covariates stay in place
        assert_eq!(s.xp.column(1), s.xq.column(1));
    }

    #[test]
    fn mi_truths() {
        assert_eq!(mi_gaussian_truth(3, 0.0), 0.0);
        assert!((mi_gaussian_truth(2, 0.8) - 1.0217).abs() < 1e-4);
        assert!((mi_gaussian_truth(2, 0.8) + 0.36f64.ln()).abs() < 1e-15);
        assert!((mi_gaussian_truth(10, 0.2) - 0.2041).abs() < 1e-4);
        assert!(gen_mi_gaussian(2, 1.0, 10, 0).is_err());
        assert!(gen_mi_gaussian(2, -1.2, 10, 0).is_err());
    }

    #[test]
    fn mi_p1_matches_numerical_integration() {
        // MI = ∫∫ p(u,v) log r(u,v) du dv by the midpoint rule on [-8, 8]²
        let rho: f64 = 0.8;
        let t = RatioTruth::MiGaussian { p: 1, rho };
        let s = 1.0 - rho * rho;
        let h = 0.02;
        let mut acc = 0.0;
        let steps = (16.0 / h) as usize;
        for i in 0..steps {
            let u = -8.0 + (i as f64 + 0.5) * h;
            for j in 0..steps {
                let v = -8.0 + (j as f64 + 0.5) * h;
                let joint = (-(u * u - 2.0 * rho * u * v + v * v) / (2.0 * s)).exp()
                    / (2.0 * PI * s.sqrt());
                acc += joint * t.evaluate(&[u, v]).unwrap().ln() * h * h;
            }
        }
        assert!((acc - mi_gaussian_truth(1, rho)).abs() < 1e-6, "{acc}");
    }

    #[test]
    fn mi_sample_structure() {
        let s = gen_mi_gaussian(2, 0.8, 2000, 9).unwrap();
        assert_eq!(s.d(), 4);
        assert_eq!(s.xp.column(0), s.xq.column(0));
        let mut a = s.xp.column(3);
        let mut b = s.xq.column(3);
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        let (u, v) = (s.xp.column(0), s.xp.column(2));
        let corr = mean(&u.iter().zip(&v).map(|(a, b)| a * b).collect::<Vec<_>>());
        assert!((corr - 0.8).abs() < 0.05, "{corr}");
    }

    #[test]
    fn truths_average_to_one_under_denominator() {
        let cases = [
            gen_stabilized_weights(&[0.5; 3], 100_000, 1).unwrap(),
            gen_mi_gaussian(2, 0.5, 100_000, 2).unwrap(),
        ];
        for s in cases {
            let r = s.truth.evaluate_rows(&s.xq).unwrap();
            let m = mean(&r);
            let se = (crate::numeric::variance(&r) / r.len() as f64).sqrt();
            assert!(r.iter().all(|&v| v > 0.0));
            assert!((m - 1.0).abs() <= 3.0 * se, "{}: mean {m} se {se}", s.descriptor.name);
        }
    }

    #[test]
    fn generators_are_pure() {
        let a = gen_mi_gaussian(1, 0.3, 50, 4).unwrap();
        let b = gen_mi_gaussian(1, 0.3, 50, 4).unwrap();
        assert_eq!(a.xp, b.xp);
        assert_eq!(a.xq, b.xq);
        assert_ne!(gen_gaussian_pair(2, 5, 5, 1).unwrap().xp, gen_gaussian_pair(2, 5, 5, 2).unwrap().xp);
    }
}
