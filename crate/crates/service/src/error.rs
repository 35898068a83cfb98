use thiserror::Error;

pub type Result<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{stage} stage timed out after {ms} ms")]
    Timeout { stage: &'static str, ms: u64 },

    #[error("{stage} stage failed: {detail}")]
    Stage { stage: &'static str, detail: String },

    #[error("busy: a reply is still playing")]
    Busy,

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] ico3d_core::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    /// Short tag used as the `kind` of error events on the wire.
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::InvalidInput(_) => "invalid-input",
            ServiceError::Timeout { .. } => "timeout",
            ServiceError::Stage { .. } => "stage-error",
            ServiceError::Busy => "busy",
            ServiceError::Config(_) => "config",
            ServiceError::Core(_) => "render-error",
            ServiceError::Io(_) => "io",
        }
    }
}
