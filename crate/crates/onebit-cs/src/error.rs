use std::path::Path;

use thiserror::Error;

/// Crate-wide error type. Variants map to the failure classes the tools
/// distinguish: bad arguments, shape mismatches, numeric blow-ups, degenerate
/// inputs, unreadable files, and diverged training runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Training { epoch: usize, detail: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parse(path: &Path, detail: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            detail: detail.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
