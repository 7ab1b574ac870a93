use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error in {file}: {message}")]
    Schema { file: String, message: String },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("duplicate {key} at lines {first} and {second}")]
    Duplicate {
        key: String,
        first: usize,
        second: usize,
    },

    #[error("all pixel weights are zero for {0}")]
    DegenerateWeight(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("month M{month} has no data for {context}")]
    MissingMonth { month: u8, context: String },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("solver did not converge: {0}")]
    Convergence(String),

    #[error("kernel matrix is not positive definite: {0}")]
    Conditioning(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("statistic undefined: {0}")]
    Undefined(String),

    #[error("label leakage suspected: column `{column}` has |r| = {corr:.6} with the target")]
    Leakage { column: String, corr: f64 },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("year {0} is already labelled; operational forecasts target unlabelled years")]
    AlreadyLabelled(i32),

    #[error("report is empty: {0}")]
    EmptyReport(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("backend timed out after {0:?}")]
    BackendTimeout(Duration),

    #[error("backend exited ({status}); stderr: {stderr}")]
    BackendCrash { status: String, stderr: String },

    #[error("backend protocol error: {0}")]
    Protocol(String),

    #[error("backend returned error `{code}`: {message}")]
    Backend { code: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
