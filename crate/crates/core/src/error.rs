use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Network or layer configuration is dimensionally inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite values encountered in inputs or during training.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Internal bookkeeping mismatch (trace/network, gradient shapes).
    #[error("internal error: {0}")]
    Internal(String),

    /// Dataset or evaluation input does not satisfy a precondition.
    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
