use thiserror::Error;

use crate::siggen::ClassLabel;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: &'static str, reason: String },

    #[error("frequency estimation failed: {0}")]
    Estimation(String),

    #[error("estimated frequency {freq:.4} Hz is outside ±10% of nominal {nominal} Hz")]
    FrequencyOutOfRange { freq: f64, nominal: f64 },

    #[error("signal length {len} is not divisible by {required}")]
    Shape { len: usize, required: usize },

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("class {0} has no training examples")]
    MissingClass(ClassLabel),

    #[error("training error: {0}")]
    Training(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("cannot load model: {0}")]
    ModelLoad(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed waveform file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        field,
        reason: reason.into(),
    }
}
