use ico3d_core::{BundleError, Error as CoreError};
use ico3d_service::ServiceError;
use thiserror::Error;

/// Exit codes: 0 success, 1 validation failure, 2 usage, 3 I/O,
/// 4 malformed input file, 5 runtime failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
    #[error("runtime: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Format(_) => 4,
            CliError::Runtime(_) => 5,
        }
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<BundleError> for CliError {
    fn from(e: BundleError) -> Self {
        match e {
            BundleError::Io(e) => CliError::Io(e.to_string()),
            e => CliError::Format(e.to_string()),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io(e) => CliError::Io(e.to_string()),
            CoreError::Bundle(b) => b.into(),
            e @ (CoreError::InvalidInput(_) | CoreError::ModelCorrupt(_)) => CliError::Format(e.to_string()),
            e @ (CoreError::Singular(_) | CoreError::BranchAmbiguity(_)) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Core(c) => c.into(),
            ServiceError::Io(e) => CliError::Io(e.to_string()),
            ServiceError::Config(m) => CliError::Usage(m),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
