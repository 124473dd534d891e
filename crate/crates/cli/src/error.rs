use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}:{line}: {message}", path.display())]
    Config { path: PathBuf, line: usize, message: String },

    #[error("configs cannot be compared: {0}")]
    Rejected(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("channel {channel}: {source}")]
    Solver { channel: u64, source: beamsolve_core::Error },

    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 1 for bad input, 2 for I/O, 3 for a run or check that did not complete.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Rejected(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Solver { .. } | CliError::Failed(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
