use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes. These values are part of the CLI contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    CheckFailed = 1,
    Divergence = 2,
    Input = 3,
    NonStationary = 4,
}

impl ExitCode {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("malformed {}: {reason}", path.display())]
    Parse { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] linflow_core::Error),
    #[error("failed checks: {}", .0.join(", "))]
    ChecksFailed(Vec<String>),
    #[error("non-stationary endpoint: {0}")]
    NonStationary(String),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            AppError::Io { .. } | AppError::Config(_) | AppError::Parse { .. } => ExitCode::Input,
            AppError::Core(linflow_core::Error::Divergence { .. }) => ExitCode::Divergence,
            AppError::Core(_) => ExitCode::Input,
            AppError::ChecksFailed(_) => ExitCode::CheckFailed,
            AppError::NonStationary(_) => ExitCode::NonStationary,
        }
    }
}

pub type Result<T, E = AppError> = std::result::Result<T, E>;
