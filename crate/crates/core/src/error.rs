use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Data that carries no information for the requested operation
    /// (constant columns, empty conditioning events, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid vine structure: {0}")]
    Structure(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("calibration did not converge: {message}\n{trace}")]
    Calibration { message: String, trace: String },

    #[error("parse error in {path} at row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Structure(_) => 2,
            Error::Parse { .. } | Error::Io { .. } | Error::Json(_) | Error::Degenerate(_) => 3,
            Error::Domain(_)
            | Error::Optimization(_)
            | Error::Numeric(_)
            | Error::Calibration { .. } => 4,
        }
    }
}
