use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] stepup_core::Error),

    /// Missing or inconsistent flags.
    #[error("{0}")]
    Usage(String),

    /// The command ran but a necessary-condition audit failed.
    #[error("audit failed: {0}")]
    Audit(String),

    #[error("config {path}: {reason}")]
    Config { path: PathBuf, reason: String },

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 parameter error, 3 precondition or audit failure, 4 I/O error.
    pub fn exit_code(&self) -> u8 {
        use stepup_core::Error as E;
        match self {
            CliError::Core(E::Precondition(_) | E::Refused(_)) | CliError::Audit(_) => 3,
            CliError::Core(E::Io(_)) | CliError::Read { .. } | CliError::Write { .. } => 4,
            CliError::Core(E::Csv(e)) | CliError::Csv(e) if e.is_io_error() => 4,
            _ => 2,
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
