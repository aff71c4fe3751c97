use std::path::PathBuf;

use thiserror::Error;

/// A file that could not be read as its declared format.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

impl FormatError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn line(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        FormatError::Line {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn file(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        FormatError::File {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Top-level outcome of a subcommand, mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Input parsed but failed a check.
    #[error("{0}")]
    Validation(String),
    /// Input could not be parsed or read.
    #[error(transparent)]
    Malformed(#[from] anyhow::Error),
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Malformed(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Malformed(_) => 2,
        }
    }
}
