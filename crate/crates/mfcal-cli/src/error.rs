//! Command-line error type and its process exit codes.

use std::path::PathBuf;

/// Result alias for the command-line layer.
pub type Result<T> = std::result::Result<T, CliError>;

/// Failures surfaced by the command-line pipeline.
///
/// Every variant maps onto one of the documented exit codes:
/// 2 for configuration and data-schema problems, 3 for numerical or
/// estimation failures inside the modeling library, 4 when a study
/// lost too many iterations to be trusted.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Configuration file problems: syntax, missing or invalid keys.
    #[error("config: {0}")]
    Config(String),

    /// Dataset problems: unreadable file, missing column, bad cell.
    #[error("data: {0}")]
    Data(String),

    /// Failure writing an output artifact.
    #[error("writing {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    /// Anything the modeling library reports.
    #[error(transparent)]
    Lib(#[from] mfcal::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Data(_) | CliError::Write { .. } => 2,
            CliError::Lib(e) => match e {
                mfcal::Error::Domain(_) => 2,
                mfcal::Error::Analysis(_) => 4,
                _ => 3,
            },
        }
    }
}
