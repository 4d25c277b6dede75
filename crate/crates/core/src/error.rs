use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid protocol parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("sub-channel {index}: transmittance {value} outside (0, 1]")]
    InvalidTransmittance { index: usize, value: f64 },

    #[error("sub-channel {index}: excess noise {value} must be finite and non-negative")]
    InvalidExcessNoise { index: usize, value: f64 },

    #[error("sub-channel {index}: probability {value} outside [0, 1]")]
    InvalidProbability { index: usize, value: f64 },

    #[error("sub-channel probabilities sum to {sum}, expected 1")]
    ProbabilitySum { sum: f64 },

    #[error("probabilities supplied for some sub-channels but not all")]
    PartialProbabilities,

    #[error("ensemble must contain at least one sub-channel")]
    EmptyEnsemble,

    #[error("block length must be at least 1 (sub-channel {index})")]
    EmptyBlock { index: usize },

    #[error("{what}: expected {expected} entries, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("sampling fraction {0} outside (0, 1]")]
    InvalidFraction(f64),

    #[error("sampling plan index {index} out of range for length {len}")]
    PlanIndexOutOfRange { index: usize, len: usize },

    #[error("sampling plan contains duplicate index {0}")]
    PlanDuplicateIndex(usize),

    #[error("sparsity budget must be at least 1")]
    InvalidSparsity,

    #[error("residual tolerance {0} must be finite and non-negative")]
    InvalidTolerance(f64),

    #[error("dense sensing matrix with {columns} columns exceeds the guard of {limit}; subsample columns instead")]
    MemoryGuard { columns: usize, limit: usize },

    #[error("mutual incoherence needs at least two columns")]
    TooFewColumns,

    #[error("variance needs at least two samples, got {0}")]
    TooFewSamples(usize),

    #[error("no usable sub-channel estimates to aggregate")]
    NoUsableEstimates,

    #[error("G(x) undefined for unphysical eigenvalue {0}")]
    UnphysicalEigenvalue(f64),

    #[error("invalid channel summary: {0}")]
    InvalidSummary(&'static str),

    #[error("transmittance file: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
