use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// The three broad categories map onto the CLI exit codes: contract/validation
/// failures (1), I/O and file-format failures (2), numerical failures (3).
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition or data contract was violated by the caller or the input data.
    #[error("{0}")]
    Invalid(String),

    /// Filesystem or file-format failure.
    #[error("{path}: {message}")]
    Io { path: String, message: String },

    /// A computation produced a non-finite value or an otherwise unusable result.
    #[error("{0}")]
    Numerical(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) => 1,
            Error::Io { .. } => 2,
            Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
