use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad magic, not a {format} file")]
    BadMagic { path: PathBuf, format: &'static str },

    #[error("{path}: truncated, expected {expected} payload bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}: malformed file: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("object leaves the frame at frame {frame}")]
    ObjectLeavesFrame { frame: usize },

    #[error("kernel bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("feature dimension {d} exceeds the supported maximum {max}")]
    FeatureDimOverflow { d: usize, max: usize },

    #[error("Gram matrix is singular (pivot {pivot:e} at column {column}); use a positive ridge")]
    SingularGram { column: usize, pivot: f64 },

    #[error("solution collapsed to zero (norm {norm:e}) at iteration {iteration}")]
    CollapsedSolution { iteration: usize, norm: f64 },

    #[error("bad init file {path}: {reason}")]
    BadInitFile { path: PathBuf, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("explicit matrices need n <= {cap}, got n = {n}")]
    TooLarge { n: usize, cap: usize },

    #[error("power iteration did not converge: {reason}")]
    NoConvergence {
        reason: String,
        best: Box<crate::oracle::PowerResult>,
    },

    #[error("relative change undefined for a zero baseline")]
    ZeroBaseline,

    #[error("shape mismatch for frame {frame}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        frame: usize,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("network module failed: {0}")]
    NetworkFailed(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
