use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Vocabulary(String),
    #[error("image ids differ between ground truth and predictions (missing predictions: [{}], no ground truth: [{}])", missing_pred.join(", "), missing_gt.join(", "))]
    IdMismatch { missing_pred: Vec<String>, missing_gt: Vec<String> },
    #[error("{0}")]
    InsufficientPoints(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } => 2,
            CliError::Vocabulary(_) => 3,
            CliError::IdMismatch { .. } => 4,
            CliError::InsufficientPoints(_) => 5,
            CliError::Divergence(_) => 6,
            CliError::Io { .. } | CliError::Failed(_) => 1,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, line: usize, message: impl Into<String>) -> CliError {
        CliError::Parse { path: path.to_path_buf(), line, message: message.into() }
    }
}
