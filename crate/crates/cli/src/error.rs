use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] midistill_core::Error),
    #[error("{failed} self-check(s) failed")]
    SelfCheck { failed: usize },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 1 for configuration and user errors, 2 for a
    /// diverged run, 3 for a failed self-check.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(midistill_core::Error::Diverged { .. }) => 2,
            CliError::SelfCheck { .. } => 3,
            _ => 1,
        }
    }
}
