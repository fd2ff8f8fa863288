//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DjqeError {
    /// Invalid arguments, configuration, or data.
    #[error("invalid input: {0}")]
    Validation(String),

    /// An operation that requires at least one selected sample got none.
    #[error("empty interval: no samples selected by the mask")]
    EmptyInterval,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Malformed CSV content; `row` is 1-based and counts the header.
    #[error("malformed CSV at {path}, row {row}: {message}")]
    CsvRow {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Gradient descent produced a non-finite loss and no fallback was possible.
    #[error("training diverged: non-finite loss")]
    TrainingDiverged,

    /// Exhaustive enumeration refused: 2^(m-1) partitions is too many.
    #[error("brute force refused: m={0} exceeds the enumeration guard (m <= 16)")]
    BruteForceGuard(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl DjqeError {
    pub fn validation(msg: impl Into<String>) -> Self {
        DjqeError::Validation(msg.into())
    }

    /// Process exit code category: 1 validation, 2 i/o, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            DjqeError::Validation(_)
            | DjqeError::EmptyInterval
            | DjqeError::DimensionMismatch { .. }
            | DjqeError::CsvRow { .. }
            | DjqeError::BruteForceGuard(_) => 1,
            DjqeError::Io { .. } => 2,
            DjqeError::TrainingDiverged | DjqeError::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, DjqeError>;
