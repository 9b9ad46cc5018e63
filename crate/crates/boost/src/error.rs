use thiserror::Error;

/// Errors raised while training or applying a boosted ensemble.
#[derive(Debug, Error)]
pub enum BoostError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("training labels contain a single class ({0}); at least two are required")]
    DegenerateLabels(i64),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("model format: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BoostError>;
