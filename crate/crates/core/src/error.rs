//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failure modes of the estimation, control and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiseError {
    /// Input data is malformed: non-finite entries or inconsistent dimensions.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The Riccati equation has no stabilizing solution.
    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),
    /// A deterministic integration produced a non-finite value.
    #[error("integration diverged at t = {t}")]
    DivergedIntegration { t: f64 },
    /// A singular value reached the rank tolerance while being tracked.
    #[error("rank deficiency at t = {t}: {detail}")]
    RankDeficiency { t: f64, detail: String },
    /// A noise intensity or covariance is not (semi)definite as required.
    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),
    /// rank(C̄₂G₂) is smaller than the number of dynamics-only inputs.
    #[error("unknown input not identifiable: rank(C2bar G2) = {rank}, required {required}")]
    UnidentifiableInput { rank: usize, required: usize },
    /// The innovation covariance R̃₂ lost positive definiteness.
    #[error("innovation covariance is not positive definite")]
    IllConditionedInnovation,
    /// The finite-difference buffer does not yet reach back by the lag.
    #[error("finite-difference history not available before t = {ready_at}")]
    NeedWarmup { ready_at: f64 },
    /// The implicit feedback loop through the input estimate is singular.
    #[error("feedback loop ill-posed: condition number {cond:e}")]
    FeedbackLoopIllPosed { cond: f64 },
    /// Neither the u-ODE nor the pseudo-inverse recovery applies.
    #[error("feedback law cannot be resolved: {0}")]
    Unresolvable(String),
    /// A bias bound requires a stable error system.
    #[error("no finite bound: {0}")]
    NoFiniteBound(String),
    /// Scenario name not recognised.
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    /// The ground-truth simulation produced a non-finite state.
    #[error("simulation diverged at t = {t}")]
    DivergedSimulation { t: f64 },
    /// Configuration could not be parsed or validated.
    #[error("configuration error: {0}")]
    Config(String),
    /// Filesystem failure while writing artifacts.
    #[error("i/o error: {0}")]
    Io(String),
}

impl LiseError {
    /// True for errors caused by the user's configuration rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            LiseError::Config(_) | LiseError::UnknownScenario(_) | LiseError::Io(_)
        )
    }
}

impl From<std::io::Error> for LiseError {
    fn from(e: std::io::Error) -> Self {
        LiseError::Io(e.to_string())
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, LiseError>;
