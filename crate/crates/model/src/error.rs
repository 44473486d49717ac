use petct_core::report::ReportError;
use petct_core::ConfigError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Template(#[from] ReportError),
    #[error("prompt of {needed} tokens exceeds the limit of {limit}")]
    PromptOverflow { needed: usize, limit: usize },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;
