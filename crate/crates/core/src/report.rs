//! CSV reports of per-run metrics and lattice dumps for heatmaps.
//!
//! Reports have the fixed header `scenario,method,seed,metric,value,n,runtime_s`
//! and write floats with 17 significant digits, so parsing a report gives
//! back the exact values. Lines end in LF.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;

pub const REPORT_HEADER: &str = "scenario,method,seed,metric,value,n,runtime_s";
pub const GRID_HEADER: &str = "x1,x2,r_true,r_hat";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rmse,
    Rmsle,
    MaeMi,
    Nmse,
    Ase,
    /// A failed run; the value is 0.
    Error,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Rmsle => "rmsle",
            Metric::MaeMi => "mae_mi",
            Metric::Nmse => "nmse",
            Metric::Ase => "ase",
            Metric::Error => "error",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Metric::Rmse, Metric::Rmsle, Metric::MaeMi, Metric::Nmse, Metric::Ase, Metric::Error]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub scenario: String,
    pub method: String,
    pub seed: u64,
    pub metric: Metric,
    pub value: f64,
    pub n: usize,
    pub runtime_s: f64,
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn field(s: &str) -> Result<&str> {
    if s.contains([',', '\n', '\r', '"']) {
        return Err(Error::invalid(format!("report field `{s}` contains a delimiter")));
    }
    Ok(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Renders a report body, header included.
pub fn render_report(records: &[MetricRecord]) -> Result<String> {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in records {
        if !r.value.is_finite() || !r.runtime_s.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite value in record {}/{}/{}",
                r.scenario, r.method, r.seed
            )));
        }
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            field(&r.scenario)?,
            field(&r.method)?,
            r.seed,
            r.metric,
            float(r.value),
            r.n,
            float(r.runtime_s)
        ));
    }
    Ok(out)
}

pub fn write_report(records: &[MetricRecord], path: &Path) -> Result<()> {
    let body = render_report(records)?;
    std::fs::write(path, body).map_err(io_err(path))
}

pub fn parse_report(text: &str) -> Result<Vec<MetricRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(Error::invalid("report header mismatch"));
    }
    let bad = |i: usize, what: &str| Error::invalid(format!("report line {}: bad {what}", i + 2));
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(i, "field count"));
            }
            Ok(MetricRecord {
                scenario: f[0].to_string(),
                method: f[1].to_string(),
                seed: f[2].parse().map_err(|_| bad(i, "seed"))?,
                metric: f[3].parse()?,
                value: f[4].parse().map_err(|_| bad(i, "value"))?,
                n: f[5].parse().map_err(|_| bad(i, "n"))?,
                runtime_s: f[6].parse().map_err(|_| bad(i, "runtime"))?,
            })
        })
        .collect()
}

pub fn read_report(path: &Path) -> Result<Vec<MetricRecord>> {
    parse_report(&std::fs::read_to_string(path).map_err(io_err(path))?)
}

/// `steps × steps` lattice on `[lo, hi]²`, `x1` varying slowest.
pub fn lattice(lo: f64, hi: f64, steps: usize) -> DenseMatrix {
    let steps = steps.max(2);
    let at = |i: usize| lo + (hi - lo) * i as f64 / (steps - 1) as f64;
    let mut data = Vec::with_capacity(2 * steps * steps);
    for i in 0..steps {
        for j in 0..steps {
            data.push(at(i));
            data.push(at(j));
        }
    }
    DenseMatrix::new(steps * steps, 2, data).expect("finite lattice")
}

/// Writes `x1,x2,r_true,r_hat` rows for a two-column point set.
pub fn write_grid_dump(path: &Path, points: &DenseMatrix, truth: &[f64], estimate: &[f64]) -> Result<()> {
    if points.cols() != 2 {
        return Err(Error::dims(2, points.cols()));
    }
    if truth.len() != points.rows() || estimate.len() != points.rows() {
        return Err(Error::dims(points.rows(), truth.len().min(estimate.len())));
    }
    let mut out = Vec::new();
    writeln!(out, "{GRID_HEADER}").expect("in-memory write");
    for (i, r) in points.row_iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{}",
            float(r[0]),
            float(r[1]),
            float(truth[i]),
            float(estimate[i])
        )
        .expect("in-memory write");
    }
    std::fs::write(path, out).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(method: &str, value: f64) -> MetricRecord {
        MetricRecord {
            scenario: "toy2d".into(),
            method: method.into(),
            seed: 3,
            metric: Metric::Rmsle,
            value,
            n: 5000,
            runtime_s: 0.0,
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(render_report(&[]).unwrap(), format!("{REPORT_HEADER}\n"));
    }

    #[test]
    fn rows_in_order_with_lf() {
        let body = render_report(&[rec("b", 0.1), rec("a", 0.2)]).unwrap();
        assert!(!body.contains('\r'));
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("toy2d,b,3,rmsle,1.0000000000000001e-1,5000,"));
        assert!(lines[2].contains(",a,"));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let records = vec![rec("ppdre", 0.123_456_789_012_345_68), rec("ulsif:clamped", 1e-300)];
        write_report(&records, &path).unwrap();
        assert_eq!(read_report(&path).unwrap(), records);
        let missing = dir.path().join("no/such/dir/r.csv");
        let err = write_report(&records, &missing).unwrap_err();
        assert!(err.to_string().contains("no/such/dir"));
    }

    #[test]
    fn rejects_non_finite_and_delimiters() {
        assert!(render_report(&[rec("ppdre", f64::NAN)]).is_err());
        assert!(render_report(&[rec("a,b", 1.0)]).is_err());
        assert!(parse_report("bad header\n").is_err());
    }

    #[test]
    fn grid_dump_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let pts = lattice(-1.0, 1.0, 3);
        assert_eq!(pts.row(1), &[-1.0, 0.0]);
        write_grid_dump(&path, &pts, &[1.0; 9], &[2.0; 9]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.starts_with("x1,x2,r_true,r_hat\n"));
    }

    proptest! {
        #[test]
        fn values_round_trip_exactly(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, seed in any::<u64>()) {
            let r = MetricRecord { seed, ..rec("m", v) };
            let back = parse_report(&render_report(std::slice::from_ref(&r)).unwrap()).unwrap();
            prop_assert_eq!(back[0].value.to_bits(), v.to_bits());
            prop_assert_eq!(back[0].seed, seed);
        }
    }
}
