use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A state coordinate became NaN or infinite during integration.
    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Every simulated path in a batch aborted with a non-finite state.
    #[error("all {n_paths} paths aborted with non-finite states")]
    AllPathsNonFinite { n_paths: usize },

    #[error("point (t={t}, x={x:?}) lies in the forbidden set")]
    PointOutsideC { t: f64, x: Vec<f64> },

    #[error("finite-difference probe (t={t}, x={x:?}) leaves the survival set")]
    ProbeOutsideC { t: f64, x: Vec<f64> },

    #[error("value {0} is outside [0, 1]")]
    OutOfRange(f64),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("check requires a closed-form or tabulated u")]
    RequiresUOracle,

    #[error("effective sample size {ess:.1} of the weighted ensemble is below {min}")]
    DegenerateWeights { ess: f64, min: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
