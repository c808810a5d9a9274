//! Error type shared across the toolkit.

use thiserror::Error;

/// Unified error for model validation, data handling and numerics.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter vector, calendar or configuration failed validation.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Input data is structurally unusable (too short, out of session,
    /// wrong schema, ...).
    #[error("bad data: {0}")]
    Data(String),

    /// A numerical routine failed to produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// CSV layer error.
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    /// Filesystem error.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
