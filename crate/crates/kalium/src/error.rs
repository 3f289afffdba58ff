//! Error type shared across the library.

use thiserror::Error;

/// Library-wide error type.
///
/// `Io` and `Parse` carry enough context to point the user at the offending
/// file (and line, for CSV input). Everything else is a validation or
/// numerical failure on otherwise well-formed data.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on arguments or configuration was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data is structurally fine but unusable (empty cohort, all
    /// points identical, zero variance, ...).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A CSV row failed to parse.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    /// Underlying I/O failure.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Training error exploded relative to its starting point.
    #[error("training diverged at epoch {epoch}: rmse {rmse:.6} > 10 x initial {initial:.6}")]
    Divergence { epoch: usize, rmse: f64, initial: f64 },

    /// A model was applied to inputs it was not built for.
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    /// An error raised while processing one cross-validation fold.
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateData(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
