use thiserror::Error;

/// Errors raised by the drccbo library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("gram matrix is not positive definite (observation {index}, pivot {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("replication {rep}: {source}")]
    AtReplication {
        rep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::Json(_) => true,
            Error::AtReplication { source, .. } | Error::AtIteration { source, .. } => {
                source.is_config()
            }
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
