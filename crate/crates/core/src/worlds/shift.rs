//! Regression data under biased sampling, and CSV ingestion.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::{dot, mean, uniform_matrix, variance, DenseMatrix, SeededRng};

const REDRAWS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    /// Feature column names; synthetic data uses `x1, x2, ...`.
    pub columns: Vec<String>,
}

impl Dataset {
    pub fn new(x: DenseMatrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dims(x.rows(), y.len()));
        }
        let columns = (1..=x.cols()).map(|j| format!("x{j}")).collect();
        Ok(Self { x, y, columns })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            columns: self.columns.clone(),
        }
    }
}

/// `y = 10 sin(π x₁x₂) + 20 (x₃ − 0.5)² + 10 x₄ + 5 x₅` on ten inputs.
pub fn friedman_mean(x: &[f64]) -> f64 {
    10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
        + 20.0 * (x[2] - 0.5).powi(2)
        + 10.0 * x[3]
        + 5.0 * x[4]
}

/// `x ~ U[0, 1]^10`, `y = friedman_mean(x) + noise_sd · ε`.
pub fn gen_friedman(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("need at least one row"));
    }
    let mut rng = SeededRng::new(seed);
    let x = uniform_matrix(&mut rng, n, 10, 0.0, 1.0);
    let y = x
        .row_iter()
        .map(|r| friedman_mean(r) + noise_sd * rng.normal())
        .collect::<Vec<_>>();
    Dataset::new(x, y)
}

#[derive(Debug, Clone)]
pub struct ShiftSplit {
    pub train: Dataset,
    pub test: Dataset,
    pub omega: Vec<f64>,
    /// Column means of the full dataset.
    pub center: Vec<f64>,
    /// Standard deviation of `ωᵀ(x − x̄)` over the full dataset.
    pub scale: f64,
}

impl ShiftSplit {
    /// Probability that a row with inputs `x` lands in the training set.
    pub fn selection_probability(&self, x: &[f64]) -> f64 {
        let c: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let v = 4.0 * dot(&self.omega, &c) / self.scale;
        1.0 / (1.0 + (-v).exp())
    }
}

/// Splits a dataset by biased sampling: row `i` joins the training set with
/// probability `σ(4 ωᵀ(x_i − x̄) / sd)`, `ω ~ U[−1, 1]^d`; the rest form the
/// test set.
pub fn gen_covariate_shift(data: &Dataset, seed: u64) -> Result<ShiftSplit> {
    let n = data.len();
    if n < 20 {
        return Err(Error::invalid("covariate shift split needs at least 20 rows"));
    }
    let d = data.x.cols();
    let center: Vec<f64> = (0..d).map(|j| mean(&data.x.column(j))).collect();
    let centred: Vec<Vec<f64>> = data
        .x
        .row_iter()
        .map(|r| r.iter().zip(&center).map(|(a, b)| a - b).collect())
        .collect();
    let mut rng = SeededRng::new(seed);
    for _ in 0..REDRAWS {
        let omega: Vec<f64> = (0..d).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let proj: Vec<f64> = centred.iter().map(|r| dot(&omega, r)).collect();
        let scale = variance(&proj).sqrt();
        if !(scale > 1e-12) {
            continue;
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, v) in proj.iter().enumerate() {
            let p = 1.0 / (1.0 + (-4.0 * v / scale).exp());
            if rng.uniform() < p {
                train.push(i);
            } else {
                test.push(i);
            }
        }
        return Ok(ShiftSplit {
            train: data.select(&train),
            test: data.select(&test),
            omega,
            center,
            scale,
        });
    }
    Err(Error::invalid(format!(
        "degenerate selection projection after {REDRAWS} draws (constant inputs?)"
    )))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

/// Parses every row as finite numbers. Line numbers in errors are 1-based
/// and count the header.
fn numeric_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv_reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row_err = |message: String| Error::CsvRow {
            path: path.to_path_buf(),
            line,
            message,
        };
        if rec.len() != header.len() {
            return Err(row_err(format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let mut row = Vec::with_capacity(rec.len());
        for (field, name) in rec.iter().zip(&header) {
            let v: f64 = field
                .parse()
                .map_err(|_| row_err(format!("column `{name}`: `{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(row_err(format!("column `{name}`: non-finite value `{field}`")));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Reads a numeric CSV with a header row; `target` names the response
/// column and every other column becomes a feature.
pub fn read_csv_dataset(path: &Path, target: &str) -> Result<Dataset> {
    let (header, rows) = numeric_rows(path)?;
    let ti = header
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::MissingColumn(target.to_string()))?;
    let columns: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != ti)
        .map(|(_, h)| h.clone())
        .collect();
    let mut data = Vec::with_capacity(rows.len() * columns.len());
    let mut y = Vec::with_capacity(rows.len());
    for row in &rows {
        y.push(row[ti]);
        data.extend(row.iter().enumerate().filter(|&(j, _)| j != ti).map(|(_, v)| *v));
    }
    Ok(Dataset {
        x: DenseMatrix::new(rows.len(), columns.len(), data)?,
        y,
        columns,
    })
}

/// Reads a numeric CSV with a header row into a matrix.
pub fn read_points_csv(path: &Path) -> Result<(Vec<String>, DenseMatrix)> {
    let (header, rows) = numeric_rows(path)?;
    let d = header.len();
    let data = rows.into_iter().flatten().collect::<Vec<_>>();
    let n = data.len() / d.max(1);
    Ok((header, DenseMatrix::new(n, d, data)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn friedman_values() {
        let mut x = vec![0.0; 10];
        assert_eq!(friedman_mean(&x), 5.0);
        x[0] = 0.5;
        x[1] = 1.0;
        x[2] = 0.5;
        assert!((friedman_mean(&x) - 10.0).abs() < 1e-12);
        let a = gen_friedman(30, 1.0, 4).unwrap();
        assert_eq!(a, gen_friedman(30, 1.0, 4).unwrap());
        assert_eq!(a.x.cols(), 10);
        let clean = gen_friedman(30, 0.0, 4).unwrap();
        assert_eq!(clean.y[3], friedman_mean(clean.x.row(3)));
    }

    #[test]
    fn split_partitions_rows() {
        let data = gen_friedman(500, 1.0, 1).unwrap();
        let s = gen_covariate_shift(&data, 2).unwrap();
        assert_eq!(s.train.len() + s.test.len(), 500);
        let mut all: Vec<f64> = s.train.y.iter().chain(&s.test.y).copied().collect();
        let mut orig = data.y.clone();
        all.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        assert_eq!(all, orig);
        assert!((s.selection_probability(&s.center.clone()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn selection_favours_positive_projection() {
        let data = gen_friedman(5000, 1.0, 3).unwrap();
        let s = gen_covariate_shift(&data, 4).unwrap();
        let proj = |ds: &Dataset| {
            mean(
                &ds.x
                    .row_iter()
                    .map(|r| {
                        let c: Vec<f64> = r.iter().zip(&s.center).map(|(a, b)| a - b).collect();
                        dot(&s.omega, &c)
                    })
                    .collect::<Vec<_>>(),
            )
        };
        assert!(proj(&s.train) > 0.0);
        assert!(proj(&s.test) < 0.0);
    }

    #[test]
    fn constant_inputs_are_rejected() {
        let x = DenseMatrix::new(25, 2, vec![1.0; 50]).unwrap();
        let data = Dataset::new(x, vec![0.0; 25]).unwrap();
        assert!(gen_covariate_shift(&data, 0).is_err());
        assert!(gen_covariate_shift(&gen_friedman(10, 0.0, 0).unwrap(), 0).is_err());
    }

    fn write_tmp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_dataset_by_target_name() {
        let f = write_tmp("a,y,b\n1.5,2,3\n-4e-1,5,6\n");
        let ds = read_csv_dataset(f.path(), "y").unwrap();
        assert_eq!(ds.columns, vec!["a", "b"]);
        assert_eq!(ds.y, vec![2.0, 5.0]);
        assert_eq!(ds.x.row(1), &[-0.4, 6.0]);
        let err = read_csv_dataset(f.path(), "target").unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "target"));
    }

    #[test]
    fn csv_rejects_non_finite_with_line() {
        let f = write_tmp("a,y\n1,2\n3,nan\n");
        let err = read_csv_dataset(f.path(), "y").unwrap_err();
        match err {
            Error::CsvRow { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        let g = write_tmp("a,y\n1,2\n3,1,0\n");
        assert!(read_csv_dataset(g.path(), "y").is_err());
        let h = write_tmp("a,y\n1,2,5\n");
        assert!(read_csv_dataset(h.path(), "y").is_err());
    }

    #[test]
    fn points_csv_header_only() {
        let f = write_tmp("x1,x2\n");
        let (h, m) = read_points_csv(f.path()).unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!((m.rows(), m.cols()), (0, 2));
    }
}
