use thiserror::Error;

/// Errors raised by the robust average-reward engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("chain not ergodic: {0}")]
    NotErgodic(String),
    #[error("mixing time cap of {0} steps exceeded")]
    MixingTimeCap(u64),
    #[error("radius {radius} out of range for {family}")]
    RadiusOutOfRange { family: &'static str, radius: f64 },
    #[error("invalid Wasserstein order {0}, expected l >= 1")]
    InvalidOrder(f64),
    #[error("Wasserstein set requires a metric on the MDP")]
    MissingMetric,
    #[error("dual bracket did not close below lambda = {0:e}")]
    BracketDiverged(f64),
    #[error("instance too large for oracle mode: {0}")]
    OracleTooLarge(String),
    #[error("LP oracle failed: {0}")]
    LpFailure(String),
    #[error("{what} did not converge in {iters} iterations (residual {residual:e})")]
    MaxIters {
        what: &'static str,
        iters: usize,
        residual: f64,
    },
    #[error("contamination sets use the one-sample estimator")]
    UseOneSampleEstimator,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("alpha {alpha} outside ({lower}, 1)")]
    AlphaOutOfRange { alpha: f64, lower: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad inputs or configuration rather than
    /// by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidMdp(_)
                | Error::InvalidPolicy(_)
                | Error::ShapeMismatch(_)
                | Error::RadiusOutOfRange { .. }
                | Error::InvalidOrder(_)
                | Error::MissingMetric
                | Error::OracleTooLarge(_)
                | Error::UseOneSampleEstimator
                | Error::InvalidConfig(_)
                | Error::AlphaOutOfRange { .. }
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
