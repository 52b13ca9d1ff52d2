use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum VtError {
    /// Data violates a precondition (dimensions, arm emptiness, non-finite values).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A spec or config file is malformed or inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// A model fit failed; the message carries the failing component.
    #[error("fit failed: {0}")]
    FitFailed(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VtError>;
