use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not chain or do not match.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The caller violated a precondition (empty batch, fraction out of range, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed input file or configuration.
    #[error("format error: {0}")]
    Format(String),

    /// Input file ends before its header says it should.
    #[error("length error: {0}")]
    Length(String),

    /// Input data is internally inconsistent (e.g. image/label counts differ).
    #[error("consistency error: {0}")]
    Consistency(String),

    /// A weight or loss became non-finite during training.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool.
    ///
    /// 1 usage, 2 data/format, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Dimension(_) => 1,
            Error::Format(_) | Error::Length(_) | Error::Consistency(_) | Error::Io { .. } => 2,
            Error::Numerical(_) => 3,
        }
    }
}

macro_rules! usage {
    ($($arg:tt)*) => { $crate::error::Error::Usage(format!($($arg)*)) };
}

macro_rules! dim_err {
    ($($arg:tt)*) => { $crate::error::Error::Dimension(format!($($arg)*)) };
}

pub(crate) use dim_err;
pub(crate) use usage;
