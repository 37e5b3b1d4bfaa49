//! Command-line front end for `nlupdate`: configuration, file layout,
//! reports and plots.

use std::path::PathBuf;

pub mod commands;
pub mod config;
pub mod svg;

pub use commands::Report;
pub use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] nlupdate::Error),
}

impl CliError {
    /// Process exit status: 2 for configuration, 3 for numerical failure,
    /// 4 for I/O and malformed files.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(nlupdate::Error::Config(_)) => 2,
            CliError::Core(_) => 4,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
