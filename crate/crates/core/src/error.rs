use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{0} requires a feature map")]
    MissingFeatureMap(&'static str),

    #[error("non-finite input at update {iteration}")]
    NonFiniteInput { iteration: usize },

    #[error("filter diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("kernel dictionary reached its cap of {cap} entries")]
    DictionaryFull { cap: usize },

    #[error("operation not supported for {0}")]
    UnsupportedKind(&'static str),

    #[error("insufficient history: need {needed} samples, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("regressor index {index} underflows a delay line of length {m}")]
    IndexUnderflow { index: usize, m: usize },

    #[error("invalid probability vector {0:?}")]
    InvalidProbabilities([f64; 4]),

    #[error("clean sequence has zero power; SNR calibration is undefined")]
    ZeroPower,

    #[error("empty stream")]
    EmptyStream,

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("negative steady-state value {value:e} in {what}")]
    NegativeEstimate { what: &'static str, value: f64 },

    #[error(
        "feature dimension {dim} exceeds the cap of {cap} ({bytes} bytes of moment matrices needed)"
    )]
    ResourceCap {
        dim: usize,
        cap: usize,
        bytes: usize,
    },

    #[error("{label}: {diverged} of {runs} runs diverged, above the allowed fraction")]
    DivergenceLimit {
        label: String,
        diverged: usize,
        runs: usize,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
