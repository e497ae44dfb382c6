use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Core(#[from] bae_core::CoreError),

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("non-finite loss at batch {batch_index}")]
    NanLoss { batch_index: usize },

    #[error("{0}")]
    InvalidData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
