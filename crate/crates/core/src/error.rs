//! Error taxonomy shared by all modules.
//!
//! CLI exit codes: validation/config failures map to 1, numeric-integrity
//! failures to 2, I/O failures to 3.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor/array shape disagreement.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Invalid parameter value (e.g. sigma <= 0).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Inconsistent or unknown configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input file (dataset, checkpoint, image).
    #[error("format error: {0}")]
    Format(String),

    /// Dataset contents cannot satisfy the request.
    #[error("data error: {0}")]
    Data(String),

    /// Class label outside the valid range.
    #[error("label error: {0}")]
    Label(String),

    /// API contract violated by the caller (non-scalar loss, undrained cache, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// Unknown corruption kind or severity out of range.
    #[error("spec error: {0}")]
    Spec(String),

    /// Numeric integrity check failed (imaginary residue, non-finite loss).
    #[error("numeric-integrity error: {0}")]
    Numeric(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 2,
            Error::Io(_) => 3,
            _ => 1,
        }
    }
}
