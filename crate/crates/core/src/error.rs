use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(f64),

    #[error("row {row} is not stochastic (sum {sum}, min entry {min})")]
    NotStochastic { row: usize, sum: f64, min: f64 },

    #[error("transition estimation failed: bin {bin} of {axis} received no samples")]
    EstimationFailure { axis: &'static str, bin: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("no quantization-loss statistic recorded for grid point g = {gbar}")]
    MissingEpsilon { gbar: f64 },

    #[error(
        "exhaustive search over {candidates} threshold vectors exceeds the limit of {limit}; use policy iteration"
    )]
    SearchTooLarge { candidates: u128, limit: u128 },

    #[error("policy is not of threshold type")]
    NotThreshold,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
