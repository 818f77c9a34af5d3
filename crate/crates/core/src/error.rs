use thiserror::Error;

use crate::refinement::RefinementReport;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {msg} (best estimate {best_estimate:e})")]
    NumericalFailure { msg: String, best_estimate: f64 },

    #[error("threshold too small: delta must exceed {min_delta:e}")]
    ThresholdTooSmall { min_delta: f64 },

    #[error("tightened box is empty at mesh point {point}")]
    InfeasibleTightening { point: usize },

    #[error("Pontryagin difference is empty along state {axis}")]
    EmptySet { axis: usize },

    #[error("scaling weight bound needs finite bounds (state {axis})")]
    UnboundedWeight { axis: usize },

    #[error("mesh refinement did not meet the tolerance after {iterations} iterations")]
    RefinementFailure {
        iterations: usize,
        report: Box<RefinementReport>,
    },

    #[error("constraint tightening did not converge after {iterations} iterations")]
    TighteningFailure {
        iterations: usize,
        report: Box<RefinementReport>,
    },

    #[error("NLP solve failed at refinement iteration {iteration}: {status:?}")]
    Solver {
        iteration: usize,
        status: crate::nlp::SolveStatus,
    },

    #[error("integration failed: step size underflow at t = {t}")]
    IntegrationFailure { t: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by bad inputs rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidArgument(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
