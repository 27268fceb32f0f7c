use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wav error on {path}: {message}")]
    Wav { path: PathBuf, message: String },
    #[error("unsupported audio: {0}")]
    UnsupportedAudio(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sample {sample_id} has {len} tokens, more than the row budget {budget}")]
    SampleTooLong {
        sample_id: String,
        len: usize,
        budget: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid segment layout: {0}")]
    Segments(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: usize, loss: f64 },
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

    /// Short stable identifier for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Wav { .. } => "wav",
            Error::UnsupportedAudio(_) => "unsupported_audio",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::SampleTooLong { .. } => "sample_too_long",
            Error::Shape(_) => "shape",
            Error::Segments(_) => "segments",
            Error::Format(_) => "format",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::Json(_) => "json",
        }
    }
}
