use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("non-finite data in {0}")]
    NonFiniteData(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("axis is not strictly increasing at index {index}")]
    NonMonotoneAxis { index: usize },
    #[error("negative intensity {value} at index {index}")]
    NegativeIntensity { index: usize, value: f64 },
    #[error("image contains non-finite values")]
    NonFiniteImage,
    #[error("degenerate mixture component after {restarts} restarts")]
    DegenerateComponent { restarts: usize },
    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("too few atoms: need {needed}, got {got}")]
    TooFewAtoms { needed: usize, got: usize },
    #[error("window {window} exceeds image size {width}x{height}")]
    WindowTooLarge { window: usize, width: usize, height: usize },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AnalysisError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        AnalysisError::Io { path: path.display().to_string(), source }
    }
}

pub type Result<T> = std::result::Result<T, AnalysisError>;
