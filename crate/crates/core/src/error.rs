use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerically singular: {0}")]
    Singular(String),

    #[error("model corrupt: {0}")]
    ModelCorrupt(String),

    #[error("pose branch ambiguity: {0}")]
    BranchAmbiguity(String),

    #[error("bundle: {0}")]
    Bundle(#[from] BundleError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Distinct failure classes when reading a model bundle or splat file.
#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bad magic: expected ICO3DGSB")]
    BadMagic,

    #[error("unsupported bundle version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("non-finite value in {field} at index {index}")]
    NonFinite { field: String, index: usize },

    #[error("malformed chunk {chunk}: {detail}")]
    Malformed { chunk: String, detail: String },

    #[error("missing chunk {0}")]
    MissingChunk(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
