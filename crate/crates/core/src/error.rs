use thiserror::Error;

/// Errors raised by the analysis engine.
#[derive(Debug, Error)]
pub enum RcaError {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite loss encountered during training: {0}")]
    NonFinite(String),

    #[error("model not trained: {0}")]
    Untrained(String),

    #[error("cycle coverage mismatch: {0}")]
    CoverageMismatch(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl RcaError {
    pub(crate) fn parse(row: usize, message: impl Into<String>) -> Self {
        RcaError::Parse {
            row,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, RcaError>;
