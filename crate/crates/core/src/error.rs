use std::path::PathBuf;

use thiserror::Error;

use crate::eval::{EnvironmentError, ReportError};
use crate::llm::ProviderError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for everything that can abort a run or reject an input.
#[derive(Debug, Error)]
pub enum Error {
    /// An API was called in violation of its preconditions.
    #[error("usage error: {0}")]
    Usage(String),

    /// A configuration value is missing, unknown or out of bounds.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Environment(#[from] EnvironmentError),

    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error(transparent)]
    Report(#[from] ReportError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A reference design could not be synthesized, so the problem has no
    /// PPA baseline.
    #[error("reference design is PPA-ineligible: {0}")]
    Ineligible(String),

    /// A persisted run record could not be read back.
    #[error("corrupt record for generation {generation}: {message}")]
    Record { generation: usize, message: String },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
