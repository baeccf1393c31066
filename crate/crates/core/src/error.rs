use thiserror::Error;

pub type Result<T> = std::result::Result<T, MpeError>;

/// Errors raised anywhere in the ingestion, training and prediction pipeline.
#[derive(Debug, Error)]
pub enum MpeError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("point ({lat}, {lon}) lies outside the grid bounding box")]
    OutOfBounds { lat: f64, lon: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("index {index} out of range for {what} (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("non-finite value in {parameter}; the learning rate is probably too large")]
    NonFinite { parameter: &'static str },

    #[error("model file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl MpeError {
    pub fn class(&self) -> ErrorClass {
        match self {
            MpeError::Config(_) => ErrorClass::Usage,
            MpeError::NonFinite { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}
