use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: (N={n1}, p={p1}) vs (N={n2}, p={p2})")]
    ShapeMismatch { n1: usize, p1: usize, n2: usize, p2: usize },

    #[error("tensor needs {required} bytes, memory budget is {budget} bytes")]
    MemoryBudget { required: u128, budget: u128 },

    #[error("point is off the sphere: |x| = {norm}, expected {expected}")]
    OffSphere { norm: f64, expected: f64 },

    #[error("outside the exponential chart: {0}")]
    Chart(String),

    #[error("not enough replicas: need at least {needed}, got {got}")]
    InsufficientReplicas { needed: usize, got: usize },

    #[error("tracking failure: eigenvalues {eigenvalues:?} violate the band condition ({detail})")]
    Tracking { eigenvalues: Vec<f64>, detail: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
