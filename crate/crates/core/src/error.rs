use thiserror::Error;

use crate::model::AlternatorParams;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    /// Training produced a non-finite loss. Carries the parameters from the
    /// last epoch that finished with a finite loss.
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss {
        epoch: usize,
        last_good: Box<AlternatorParams>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
