use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("integration diverged at step {step} (t = {t:.6} s): non-finite state")]
    Divergence { step: usize, t: f64 },

    #[error("insufficient decay: found {found} qualifying peaks, need at least {needed}")]
    InsufficientDecay { found: usize, needed: usize },

    #[error("grid coverage: amplitude level {level:.6e} m has {count} in-range curves, need at least 2")]
    GridCoverage { level: f64, count: usize },

    #[error("density fit failed: {0}")]
    Fit(String),

    #[error("sampler initialization failed: {0}")]
    Initialization(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("ensemble member {index} failed: {source}")]
    Member {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed data in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by numerical failure rather than bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Divergence { .. }
            | Error::InsufficientDecay { .. }
            | Error::GridCoverage { .. }
            | Error::Fit(_)
            | Error::Initialization(_)
            | Error::Degenerate(_) => true,
            Error::Member { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
