use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at cell {0}")]
    NonFinite(usize),

    /// ILU(0) could not produce usable pivots; callers fall back to Jacobi.
    #[error("preconditioner breakdown at row {row}")]
    PreconditionerBreakdown { row: usize },

    /// Loss of positive definiteness or NaN inside PCG. `outer` is the IRLS
    /// iteration (0 when the solver was called directly), `inner` the PCG step.
    #[error("solver breakdown at outer iteration {outer}, inner iteration {inner}: {reason}")]
    SolverBreakdown {
        outer: usize,
        inner: usize,
        reason: String,
    },

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
