//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library.
///
/// The variants map onto the CLI exit-code classes: configuration problems,
/// data problems, and numeric failures.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Tensor shapes are incompatible for the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// A non-finite value appeared where finite math was required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed input data (CSV, checkpoint contents, ...), with location.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// Missing or inconsistent run configuration (checkpoints, sub-models).
    #[error("configuration error: {0}")]
    Config(String),

    /// Filesystem failure.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
