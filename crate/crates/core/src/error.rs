use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised while reading a Matrix Market file.
#[derive(Debug, Error)]
pub enum MatrixMarketError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("matrix is not square ({rows} x {cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("line {line}: entry ({row}, {col}) outside declared {n} x {n} bounds")]
    IndexOutOfBounds {
        line: usize,
        row: usize,
        col: usize,
        n: usize,
    },
    #[error("line {line}: malformed entry `{text}`")]
    MalformedEntry { line: usize, text: String },
    #[error("expected {expected} entries, found {found}")]
    EntryCount { expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    MatrixMarket {
        path: PathBuf,
        #[source]
        source: MatrixMarketError,
    },

    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("row index {index} out of range for dimension {n}")]
    InvalidMask { index: usize, n: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric: A[{row},{col}] != A[{col},{row}]")]
    NotSymmetric { row: usize, col: usize },

    #[error("{what} did not converge after {iterations} iterations (last estimate {estimate:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        estimate: f64,
    },

    #[error("matrix is singular to working precision")]
    Singular,

    #[error("enumeration of {count} cases exceeds the cap of {cap}")]
    CapExceeded { count: u128, cap: u128 },

    #[error("serialization failed: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
