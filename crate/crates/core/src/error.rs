use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A matrix that should be PSD (or a chain increment that should be
    /// PSD) has a negative eigenvalue beyond tolerance.
    #[error("order violation in {context}: min eigenvalue {min_eigenvalue:e} below -{tol:e}")]
    OrderViolation {
        context: String,
        min_eigenvalue: f64,
        tol: f64,
    },

    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: String, detail: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid spin measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn numerical(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            detail: detail.into(),
        }
    }
}
