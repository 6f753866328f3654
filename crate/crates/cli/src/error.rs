use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] asian_lns::Error),

    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Json(#[from] serde_json::Error),

    #[error("reference data: {0}")]
    Csv(#[from] csv::Error),

    #[error("output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    /// Process exit status: 3 for numerical breakdown, 2 for anything the user can fix.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}
