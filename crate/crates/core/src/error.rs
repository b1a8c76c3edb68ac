use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid hierarchy: {0}")]
    Hierarchy(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("model has not been fitted: {0}")]
    NotFitted(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// `0` is success, `2` configuration problems, `3` data problems and
    /// `4` numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Hierarchy(_)
            | Error::Data(_)
            | Error::Dimension { .. }
            | Error::Io { .. }
            | Error::Parse { .. }
            | Error::NotFitted(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}
