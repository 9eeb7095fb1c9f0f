//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration: unknown key, malformed line, out-of-range value.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed snapshot or matrix file. Carries the byte offset at which
    /// decoding failed so corrupt files can be diagnosed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// A training step produced a non-finite loss.
    #[error("training diverged at slot {slot}: loss = {loss}")]
    Divergence { slot: u64, loss: f64 },

    /// Empty input where at least one element is required.
    #[error("{0}")]
    Empty(&'static str),

    /// I/O failure with the path that caused it.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
