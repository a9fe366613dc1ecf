use std::path::{Path, PathBuf};

use mtaf_core::Error as CoreError;
use thiserror::Error;

/// Failures surfaced by a command, each with a fixed process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("{0}")]
    Sampler(CoreError),
    #[error("{0}")]
    Dimension(CoreError),
    #[error("{0}")]
    Universe(CoreError),
    #[error("{0}")]
    Core(CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } => 3,
            CliError::Sampler(_) => 4,
            CliError::Dimension(_) => 5,
            CliError::Universe(_) => 6,
            CliError::Core(_) => 1,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, reason: impl ToString) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}

fn is_dimension(e: &CoreError) -> bool {
    match e {
        CoreError::DimensionMismatch { .. } => true,
        CoreError::Pair { source, .. } => is_dimension(source),
        _ => false,
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config { .. } | CoreError::InvalidWindow { .. } => CliError::Config(e.to_string()),
            CoreError::SamplerExhausted(_) | CoreError::MissingClass(_) => CliError::Sampler(e),
            CoreError::UniverseMismatch(_) => CliError::Universe(e),
            _ if is_dimension(&e) => CliError::Dimension(e),
            _ => CliError::Core(e),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
