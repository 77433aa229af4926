use thiserror::Error;

/// Errors raised by the model, kernel, and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MphError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation failed at {path}: {message}")]
    Validation { path: String, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("density underflow at observation {row}")]
    DensityUnderflow { row: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
}

impl MphError {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        MphError::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, MphError>;
