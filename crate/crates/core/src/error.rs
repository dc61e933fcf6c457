use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the function or distribution.
    #[error("domain error: {0}")]
    Domain(String),

    /// The correlation matrix could not be factorized, even after jitter.
    #[error("cholesky factorization failed for correlation matrix (d = {dim}, rho = {rho})")]
    Factorization { dim: usize, rho: f64 },

    /// Inputs with mismatched shapes.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Data failed validation before any numeric work.
    #[error("validation error: {0}")]
    Validation(String),

    /// A numeric failure during sampling or evaluation.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) | Error::Factorization { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
