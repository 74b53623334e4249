use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("non-positive output dimension: {0}")]
    BadOutputDim(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("loss must be a scalar, got shape {0}")]
    NonScalarLoss(String),

    #[error("tensor {0} is not a node on this tape")]
    NotOnTape(String),

    #[error("duplicate parameter name: {0}")]
    DuplicateParam(String),

    #[error("unknown parameter: {0}")]
    UnknownParam(String),

    #[error("missing gradient for trainable parameter {0}")]
    MissingGrad(String),

    #[error("batch norm has no running statistics yet (eval before any train step)")]
    NoRunningStats,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("unsupported model configuration: {0}")]
    UnsupportedModel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("file format error in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("checkpoint shape mismatch for {name}: stored {stored}, model expects {expected}")]
    CheckpointShape {
        name: String,
        stored: String,
        expected: String,
    },

    #[error("non-finite loss at step {step}: {value}")]
    NonFiniteLoss { step: u64, value: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("png decode/encode error: {0}")]
    Png(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<png::DecodingError> for Error {
    fn from(e: png::DecodingError) -> Self {
        Error::Png(e.to_string())
    }
}

impl From<png::EncodingError> for Error {
    fn from(e: png::EncodingError) -> Self {
        Error::Png(e.to_string())
    }
}
