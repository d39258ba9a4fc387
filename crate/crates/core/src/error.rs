use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (non-positive pivot at index {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("non-finite gradient entry at index {index}")]
    NonFiniteGradient { index: usize },

    #[error("singular profile system: Z'Z/n_q is not invertible with zero ridge")]
    SingularProfileSystem,

    #[error("degenerate projection: every training evaluation of the fitted factor is non-positive")]
    DegenerateProjection,

    #[error("dimension mismatch{}: expected {expected}, found {found}", fmt_row(.row))]
    DimensionMismatch {
        expected: usize,
        found: usize,
        row: Option<usize>,
    },

    #[error("non-positive ratio evaluation {value} at row {row}")]
    NonPositiveEvaluation { row: usize, value: f64 },

    #[error("optimisation diverged (loss {loss:e} exceeded the divergence bound)")]
    Divergence { loss: f64 },

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("every grid point failed to fit: {}", .0.join("; "))]
    AllGridPointsFailed(Vec<String>),

    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),

    #[error("{path}: line {line}: {message}")]
    CsvRow {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("invalid model document: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid configuration: {0}")]
    Config(String),
}

fn fmt_row(row: &Option<usize>) -> String {
    match row {
        Some(r) => format!(" at row {r}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn dims(expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            expected,
            found,
            row: None,
        }
    }
}
