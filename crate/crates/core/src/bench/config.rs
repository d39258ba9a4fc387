//! Run configuration: one JSON document, every key validated.
//!
//! ```json
//! {
//!   "scenario": {"name": "toy2d", "n_p": 5000, "n_q": 5000},
//!   "methods": ["ppdre", "ulsif"],
//!   "seeds": [1, 2, 3],
//!   "folds": 5,
//!   "out": "results"
//! }
//! ```
//!
//! Omitted keys take their defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::{Grids, Method, PpdreGrid, SelectOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    /// `N(0, I_d)` over `N(0, 2 I_d)`.
    Toy2d {
        #[serde(default = "two")]
        d: usize,
        #[serde(default = "five_thousand")]
        n_p: usize,
        #[serde(default = "five_thousand")]
        n_q: usize,
    },
    /// Stabilized weights for `T = cᵀX + ε` with `c = c_scale · 1`.
    StabilizedWeights {
        #[serde(default = "ten")]
        d_x: usize,
        #[serde(default = "half")]
        c_scale: f64,
        #[serde(default = "five_thousand")]
        n: usize,
    },
    MiGaussian {
        #[serde(default = "two")]
        p: usize,
        #[serde(default = "rho_default")]
        rho: f64,
        #[serde(default = "five_thousand")]
        n: usize,
    },
    DoseResponse {
        #[serde(default = "two_thousand")]
        n: usize,
        #[serde(default = "mc_default")]
        mc_n: usize,
    },
    CovariateShiftFriedman {
        #[serde(default = "two_thousand")]
        n: usize,
        #[serde(default = "one")]
        noise_sd: f64,
    },
    /// Biased split of a user CSV; features and target named explicitly.
    CovariateShiftCsv {
        path: PathBuf,
        target: String,
        features: Vec<String>,
    },
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn rho_default() -> f64 {
    0.8
}
fn two() -> usize {
    2
}
fn ten() -> usize {
    10
}
fn two_thousand() -> usize {
    2000
}
fn five_thousand() -> usize {
    5000
}
fn mc_default() -> usize {
    100_000
}

impl ScenarioSpec {
    pub const NAMES: [&'static str; 6] = [
        "toy2d",
        "stabilized_weights",
        "mi_gaussian",
        "dose_response",
        "covariate_shift_friedman",
        "covariate_shift_csv",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioSpec::Toy2d { .. } => "toy2d",
            ScenarioSpec::StabilizedWeights { .. } => "stabilized_weights",
            ScenarioSpec::MiGaussian { .. } => "mi_gaussian",
            ScenarioSpec::DoseResponse { .. } => "dose_response",
            ScenarioSpec::CovariateShiftFriedman { .. } => "covariate_shift_friedman",
            ScenarioSpec::CovariateShiftCsv { .. } => "covariate_shift_csv",
        }
    }

    /// The scenario `name` with default parameters. The CSV scenario has no
    /// defaults and must come from a config document.
    pub fn by_name(name: &str) -> Result<Self> {
        if name == "covariate_shift_csv" {
            return Err(Error::Config(
                "covariate_shift_csv needs `path`, `target` and `features` in the config".into(),
            ));
        }
        if !Self::NAMES.contains(&name) {
            return Err(Error::Config(format!(
                "unknown scenario `{name}` (expected one of {})",
                Self::NAMES.join(", ")
            )));
        }
        serde_json::from_value(serde_json::json!({ "name": name })).map_err(|e| Error::Config(e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self {
            ScenarioSpec::Toy2d { d, n_p, n_q } => {
                if *d == 0 || *n_p < 10 || *n_q < 10 {
                    return bad("toy2d needs d >= 1 and at least 10 rows per sample".into());
                }
            }
            ScenarioSpec::StabilizedWeights { d_x, c_scale, n } => {
                if *d_x == 0 || *n < 10 || !c_scale.is_finite() {
                    return bad("stabilized_weights needs d_x >= 1, n >= 10, finite c_scale".into());
                }
            }
            ScenarioSpec::MiGaussian { p, rho, n } => {
                if *p == 0 || !(rho.abs() < 1.0) || *n < 10 {
                    return bad(format!("mi_gaussian needs p >= 1, |rho| < 1, n >= 10 (rho = {rho})"));
                }
            }
            ScenarioSpec::DoseResponse { n, mc_n } => {
                if *n < 10 || *mc_n < 10_000 {
                    return bad("dose_response needs n >= 10 and mc_n >= 10000".into());
                }
            }
            ScenarioSpec::CovariateShiftFriedman { n, noise_sd } => {
                if *n < 20 || !(*noise_sd >= 0.0) {
                    return bad("covariate_shift_friedman needs n >= 20 and noise_sd >= 0".into());
                }
            }
            ScenarioSpec::CovariateShiftCsv { path, target, features } => {
                if !path.is_file() {
                    return bad(format!("CSV input {} does not exist", path.display()));
                }
                if target.is_empty() || features.is_empty() {
                    return bad("covariate_shift_csv needs a target and at least one feature".into());
                }
            }
        }
        Ok(())
    }
}

/// Named preset for the ppDRE search grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GridPreset {
    #[default]
    Desk,
    /// The full published grid.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub folds: usize,
    /// Replaces `grids.ppdre` when set.
    pub ppdre_grid: Option<GridPreset>,
    pub grids: Grids,
    /// Growth and inner-loop settings (its `folds` is taken from the top level).
    pub selection: SelectOptions,
    pub out: PathBuf,
    pub workers: Option<usize>,
    /// Write wall-clock seconds into reports; off by default so reports are
    /// reproducible byte for byte.
    pub record_timing: bool,
    /// Lattice resolution of the heatmap dumps of 2-D scenarios.
    pub grid_steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::Toy2d { d: 2, n_p: 5000, n_q: 5000 },
            methods: vec![Method::Ppdre, Method::Ulsif],
            seeds: vec![1],
            folds: 5,
            ppdre_grid: None,
            grids: Grids::default(),
            selection: SelectOptions::default(),
            out: PathBuf::from("results"),
            workers: None,
            record_timing: false,
            grid_steps: 41,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Selection options with the top-level fold count applied.
    pub fn select_options(&self) -> SelectOptions {
        SelectOptions {
            folds: self.folds,
            ..self.selection.clone()
        }
    }

    /// Grids with the ppDRE preset applied.
    pub fn effective_grids(&self) -> Grids {
        let mut g = self.grids.clone();
        match self.ppdre_grid {
            Some(GridPreset::Desk) => g.ppdre = PpdreGrid::desk(),
            Some(GridPreset::Full) => g.ppdre = PpdreGrid::table4(),
            None => {}
        }
        g
    }

    /// Checks everything that can be checked before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.grid_steps < 2 {
            return Err(Error::Config("grid_steps must be at least 2".into()));
        }
        let g = self.effective_grids();
        if g.ppdre.k.is_empty() || g.ppdre.j.is_empty() || g.ppdre.lambda.is_empty() || g.ppdre.lr.is_empty() {
            return Err(Error::Config("every ppDRE grid axis needs at least one value".into()));
        }
        if g.ppdre.k.contains(&0) || g.ppdre.j.contains(&0) {
            return Err(Error::Config("ppDRE K and J values must be positive".into()));
        }
        if g.ppdre.lr.iter().any(|v| !(*v > 0.0)) || g.ppdre.lambda.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("ppDRE learning rates must be positive and ridges non-negative".into()));
        }
        for (name, k) in [("ulsif", &g.ulsif), ("kliep", &g.kliep)] {
            if k.sigma_scale.is_empty() || k.sigma_scale.iter().any(|v| !(*v > 0.0)) || k.centers == 0 {
                return Err(Error::Config(format!("{name} grid needs positive bandwidth scales and centers")));
            }
        }
        if g.ulsif.lambda.is_empty() || g.ulsif.lambda.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("ulsif ridge values must be positive".into()));
        }
        self.selection.fit.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.scenario.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_omitted_keys() {
        let cfg = RunConfig::from_json(r#"{"scenario": {"name": "mi_gaussian", "rho": 0.2}}"#).unwrap();
        assert_eq!(cfg.scenario, ScenarioSpec::MiGaussian { p: 2, rho: 0.2, n: 5000 });
        assert_eq!(cfg.folds, 5);
        assert_eq!(cfg.methods, vec![Method::Ppdre, Method::Ulsif]);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_methods_are_errors() {
        for text in [
            r#"{"methdos": ["ppdre"]}"#,
            r#"{"methods": ["lightgbm"]}"#,
            r#"{"scenario": {"name": "toy2d", "dims": 3}}"#,
            r#"{"scenario": {"name": "nope"}}"#,
            r#"{"grids": {"ppdre": {"K": [5]}}}"#,
        ] {
            assert!(RunConfig::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::from_json(r#"{"scenario": {"name": "mi_gaussian", "rho": 1.0}}"#).unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::from_json(
            r#"{"scenario": {"name": "covariate_shift_csv", "path": "/no/such.csv", "target": "y", "features": ["a"]}}"#,
        )
        .unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("/no/such.csv"));
    }

    #[test]
    fn presets_and_names() {
        let cfg = RunConfig::from_json(r#"{"ppdre_grid": "full"}"#).unwrap();
        assert_eq!(cfg.effective_grids().ppdre, PpdreGrid::table4());
        for name in &ScenarioSpec::NAMES[..5] {
            assert_eq!(ScenarioSpec::by_name(name).unwrap().name(), *name);
        }
        assert!(ScenarioSpec::by_name("covariate_shift_csv").is_err());
        assert!(ScenarioSpec::by_name("mnist").is_err());
    }
}
