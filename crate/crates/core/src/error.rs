use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SpaError>;

#[derive(Debug, Error)]
pub enum SpaError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {found:?}: not an SPT tensor file")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported SPT version {0:?}")]
    UnsupportedVersion(u8),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("truncated tensor file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("feature vector at pixel {pixel} has zero norm")]
    ZeroNorm { pixel: usize },
    #[error("invalid order {0}: high-order similarity needs order >= 2")]
    InvalidOrder(usize),
    #[error("seed mask is empty")]
    EmptySeed,
    #[error("ground-truth mask is empty")]
    EmptyMask,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("value {value} at index {index} lies outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("class index {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("annotation error: {0}")]
    Annotation(String),
}

impl SpaError {
    /// Stable machine-readable code, used as the CLI message prefix.
    pub fn code(&self) -> &'static str {
        match self {
            SpaError::Io { .. } => "E_IO",
            SpaError::BadMagic { .. } => "E_BAD_MAGIC",
            SpaError::UnsupportedVersion(_) => "E_VERSION",
            SpaError::UnsupportedDtype(_) => "E_DTYPE",
            SpaError::Truncated { .. } => "E_TRUNCATED",
            SpaError::NonFinite { .. } => "E_NON_FINITE",
            SpaError::Shape(_) => "E_SHAPE",
            SpaError::ZeroNorm { .. } => "E_ZERO_NORM",
            SpaError::InvalidOrder(_) => "E_ORDER",
            SpaError::EmptySeed => "E_EMPTY_SEED",
            SpaError::EmptyMask => "E_EMPTY_MASK",
            SpaError::Config(_) => "E_CONFIG",
            SpaError::OutOfRange { .. } => "E_RANGE",
            SpaError::ClassOutOfRange { .. } => "E_CLASS",
            SpaError::Annotation(_) => "E_ANNOTATION",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SpaError::Io {
            path: path.into(),
            source,
        }
    }
}
