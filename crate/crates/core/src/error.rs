use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("ingestion error in {file} (row {row}, column {column}): {message}")]
    Ingest {
        file: String,
        /// 1-based data row; 0 refers to the header or the file as a whole.
        row: usize,
        column: String,
        message: String,
    },

    #[error("constraint error: {0}")]
    Constraint(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn ingest(
        file: impl Into<String>,
        row: usize,
        column: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Ingest {
            file: file.into(),
            row,
            column: column.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 1 usage/config, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Constraint(_) => 1,
            Error::Ingest { .. } | Error::Io { .. } => 2,
            Error::Numerical(_) | Error::Invariant(_) | Error::Evaluation(_) => 3,
        }
    }
}
