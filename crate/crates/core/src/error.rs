use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("ensemble has {ensemble} matrices but the codebook has {subsets} subsets")]
    EnsembleMismatch { ensemble: usize, subsets: usize },

    #[error("subset index {index} out of range (codebook has {subsets} subsets)")]
    SubsetIndex { index: usize, subsets: usize },

    #[error("sample time {0} outside [0, 1)")]
    TimeOutOfRange(f64),

    #[error("Gram-Schmidt pivot norm {norm:e} at row {row} (rows are nearly dependent)")]
    DependentRows { row: usize, norm: f64 },

    #[error("W W* is singular (smallest eigenvalue {min_eigenvalue:e})")]
    SingularMatrix { min_eigenvalue: f64 },

    #[error("projection failed for subset {subset} at iteration {iteration}: {source}")]
    Projection {
        subset: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
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
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
