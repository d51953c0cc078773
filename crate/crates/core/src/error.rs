use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("undefined power: 0 raised to negative exponent {exponent} (node {node})")]
    UndefinedPower { node: usize, exponent: f64 },

    #[error("probability {value} exceeds 1 at ({row}, {col}); lower the density target")]
    ProbabilityOverflow { row: usize, col: usize, value: f64 },

    #[error("clustering produced {empty} empty cluster(s) for K = {k}")]
    EmptyCluster { k: usize, empty: usize },

    #[error("estimation failed for community {community}: {reason}")]
    Estimation { community: usize, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 2 for bad input data, 3 for
    /// numerical or estimation failures. Usage errors (1) never reach here.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::EmptyCluster { .. }
            | Error::Estimation { .. }
            | Error::Numerical(_)
            | Error::UndefinedPower { .. }
            | Error::ProbabilityOverflow { .. } => 3,
            _ => 2,
        }
    }
}
