use std::path::PathBuf;

use adr_cotrain::Error;
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {1}", .0.display())]
    Io(PathBuf, #[source] std::io::Error),

    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// 1 usage or configuration, 2 data or format, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(Error::Config(_)) => 1,
            CliError::Io(..)
            | CliError::Core(
                Error::Io { .. }
                | Error::Parse { .. }
                | Error::InvalidAnnotation(_)
                | Error::DimensionMismatch { .. }
                | Error::InsufficientData(_),
            ) => 2,
            CliError::Core(Error::NonFinite(_)) => 3,
        }
    }
}
