use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("feature range {index} must be strictly positive (got {value})")]
    NonPositiveRange { index: usize, value: f64 },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown segment {0}")]
    UnknownSegment(usize),

    #[error("segments {from} and {to} are mutually unreachable")]
    Unreachable { from: usize, to: usize },

    #[error("embedding dimension {dim} out of range 1..={max}")]
    EmbeddingDimension { dim: usize, max: usize },

    #[error("invalid hyperparameters: {0}")]
    Hyperparameters(String),

    #[error("matrix is not positive definite after jitter (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("covariance has a negative eigenvalue {eigenvalue:.3e} beyond tolerance")]
    NotPsd { eigenvalue: f64 },

    #[error("observed and target sets overlap at segment {0}")]
    Overlap(usize),

    #[error("local summaries were built against different support sets")]
    MismatchedSupport,

    #[error("sensor {0} contributed more than one local summary")]
    DuplicateSensor(usize),

    #[error("joint walk enumeration needs {count} evaluations, above the limit of {limit}")]
    EnumerationLimit { count: u128, limit: u128 },

    #[error("adjacency is not symmetric between sensors {a} and {b}")]
    AsymmetricAdjacency { a: usize, b: usize },

    #[error("correlation threshold must be positive, got {0}")]
    Threshold(f64),

    #[error("malformed message: {0}")]
    Wire(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
