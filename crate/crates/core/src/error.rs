use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spline: {0}")]
    InvalidSpline(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-finite objective at epoch {epoch}: {detail}")]
    NonFinite { epoch: usize, detail: String },

    #[error("unsupported model version {found} (supported: {supported})")]
    UnsupportedVersion { found: u64, supported: u64 },

    #[error("model parse error: {0}")]
    Parse(String),

    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
