use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode WAV {path}: {reason}")]
    Wav { path: PathBuf, reason: String },

    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("audio contains no samples")]
    EmptyAudio,

    #[error("audio contains a non-finite sample at index {0}")]
    NonFiniteSample(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },

    #[error("length mismatch: expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("malformed mel binary: {0}")]
    MelFormat(String),

    #[error(
        "pool too small: need {needed} sources, {available} available after excluding the batch"
    )]
    PoolTooSmall { needed: usize, available: usize },

    #[error("invalid strategy: {0}")]
    Strategy(#[from] crate::tta::Violation),

    #[error("dimension mismatch at layer {layer}: {detail}")]
    Dimension { layer: usize, detail: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
