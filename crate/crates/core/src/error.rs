use thiserror::Error;

/// Errors raised by the chain model, solvers and exporters.
#[derive(Debug, Error)]
pub enum ChainError {
    #[error("access points are not strictly increasing at index {index} ({prev} >= {next})")]
    NonMonotone { index: usize, prev: f64, next: f64 },

    #[error("access points must start at 0, got {0}")]
    BadAnchor(f64),

    #[error("last access point {last} does not cover the domain length {length}")]
    Uncovered { last: f64, length: f64 },

    #[error("invalid parameter: {0}")]
    BadParam(String),

    #[error("bump support ({lo}, {hi}) is not contained in [0, {length}]")]
    SupportOutOfDomain { lo: f64, hi: f64, length: f64 },

    #[error("invalid interval ({lo}, {hi})")]
    BadInterval { lo: f64, hi: f64 },

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("problem was built for {expected} coupling, but {requested} was requested")]
    BcMismatch { expected: &'static str, requested: &'static str },

    #[error("access point {point} is not a grid node (h = {h})")]
    GridMisaligned { point: f64, h: f64 },

    #[error("time grid mismatch: expected {expected} samples, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("initial data rejected: {0}")]
    BadInitialData(String),

    #[error("no gap longer than {needed} in the layout (largest gap {largest})")]
    NoSufficientGap { needed: f64, largest: f64 },

    #[error("trajectory has no time slices")]
    EmptyTrajectory,

    #[error("singular system: pivot {pivot:e} at row {row} (threshold {threshold:e})")]
    SingularSystem { row: usize, pivot: f64, threshold: f64 },

    #[error("problem needs {requested} entries, budget is {budget}")]
    OutOfMemory { requested: usize, budget: usize },

    #[error("iterative solve stalled after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("line {line}: {inner}")]
    AtLine { line: usize, inner: Box<ChainError> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ChainError {
    /// The underlying error with any line annotation stripped.
    pub fn root(&self) -> &ChainError {
        match self {
            ChainError::AtLine { inner, .. } => inner.root(),
            other => other,
        }
    }
}

pub type Result<T, E = ChainError> = std::result::Result<T, E>;
