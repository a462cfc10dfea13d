use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum EbmError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A factorization failed or a quantity that must be nonnegative came out
    /// materially negative.
    #[error("numerical integrity failure: {0}")]
    Numerical(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient instances: need at least {needed}, have {have}")]
    InsufficientInstances { needed: usize, have: usize },

    /// Environment or config document rejected; `key` names the offending field.
    #[error("invalid `{key}`: {message}")]
    InvalidDocument { key: String, message: String },

    #[error("episode failed at step {step}: {source}")]
    Episode {
        step: usize,
        #[source]
        source: Box<EbmError>,
    },

    #[error("replication with seed {seed} failed: {source}")]
    Replication {
        seed: u64,
        #[source]
        source: Box<EbmError>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EbmError>;

impl EbmError {
    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        EbmError::Numerical(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        EbmError::InvalidParameter(msg.into())
    }

    pub(crate) fn document(key: impl Into<String>, message: impl Into<String>) -> Self {
        EbmError::InvalidDocument {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        EbmError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(EbmError::DimensionMismatch { what, expected, got });
    }
    Ok(())
}
