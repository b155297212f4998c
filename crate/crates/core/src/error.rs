use std::fmt;

use thiserror::Error;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("record {index}: invalid {field}: {reason}")]
    Validation {
        index: usize,
        field: String,
        reason: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown column `{0}`")]
    MissingColumn(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("regressor matrix is singular; offending column `{column}`")]
    Singular { column: String },

    #[error("fixed-effect demeaning did not converge after {iterations} iterations (worst group mean {worst:e})")]
    NoConvergence { iterations: usize, worst: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("inference error: {0}")]
    Inference(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Parse { .. }
            | Error::Validation { .. }
            | Error::MissingColumn(_)
            | Error::Data(_)
            | Error::Io(_)
            | Error::Csv(_) => ErrorKind::Data,
            Error::Singular { .. }
            | Error::NoConvergence { .. }
            | Error::Numerical(_)
            | Error::Inference(_) => ErrorKind::Numerical,
        }
    }

    pub(crate) fn validation(index: usize, field: &str, reason: impl fmt::Display) -> Self {
        Error::Validation {
            index,
            field: field.to_string(),
            reason: reason.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
