use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = BofipError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BofipError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} index {index} out of range (len {len})")]
    OutOfBounds {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("input error: {0}")]
    Input(String),

    #[error("correlation matrix is ill-conditioned even with nugget {nugget:e}")]
    IllConditioned { nugget: f64 },

    #[error("every grid row has been sampled")]
    GridExhausted,

    #[error("objective failed at grid row {row} of sub-space {subspace}: {message}")]
    Evaluation {
        subspace: usize,
        row: usize,
        message: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error at line {line}: expected {expected} columns, found {found}")]
    Schema {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl BofipError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BofipError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        BofipError::InvalidConfig(msg.into())
    }

    /// Coarse category used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            BofipError::InvalidConfig(_) | BofipError::InvalidParameter(_) => {
                ErrorCategory::Configuration
            }
            BofipError::Parse { .. } | BofipError::Schema { .. } | BofipError::Csv(_) => {
                ErrorCategory::Parse
            }
            _ => ErrorCategory::Runtime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Configuration,
    Parse,
    Runtime,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Configuration => 2,
            ErrorCategory::Parse => 3,
            ErrorCategory::Runtime => 4,
        }
    }
}
