use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("schedule generation failed: {0}")]
    Generation(String),

    #[error("non-finite loss in batch {batch}")]
    NonFinite { batch: usize },

    #[error("{0}")]
    Analysis(String),

    #[error(transparent)]
    Format(#[from] crate::io::FormatError),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
