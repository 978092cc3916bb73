use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the domain of a transform, e.g. a proportion of
    /// exactly 0 or 1 under the logit.
    #[error("domain error at row {row}, column {col}: {msg}")]
    Domain { row: usize, col: usize, msg: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Shapes or labelings that do not fit together.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A proposed regression model violates the design-size constraint.
    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
