use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("rank deficient system: {0}")]
    RankDeficient(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("dataset error in {path}: {message}")]
    Dataset { path: PathBuf, message: String },

    #[error("{failed} of {total} replications failed (limit 5%)")]
    TooManyFailures {
        failed: usize,
        total: usize,
        report: Box<crate::harness::SimReport>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short tag used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Dimension { .. } => "dimension",
            Error::RankDeficient(_) => "rank_deficient",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::DegenerateData(_) => "degenerate_data",
            Error::Config { .. } => "config",
            Error::Dataset { .. } => "dataset",
            Error::TooManyFailures { .. } => "too_many_failures",
            Error::Io { .. } => "io",
        }
    }

    /// Whether the error stems from user-facing configuration rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
