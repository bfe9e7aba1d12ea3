use thiserror::Error;

use crate::evolution::TrajectoryRecord;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("tail guard tripped: {kind} tail fraction {fraction:.3e} exceeds {threshold:.1e}")]
    TailGuard {
        kind: &'static str,
        fraction: f64,
        threshold: f64,
    },

    /// The run stopped early; `record` holds everything recorded before the stop.
    #[error("run aborted at t = {time}: {reason}")]
    Aborted {
        time: f64,
        reason: String,
        record: Box<TrajectoryRecord>,
    },

    #[error("term budget exceeded: {terms} terms requested, limit {limit}")]
    TermBudget { terms: u128, limit: u128 },

    #[error("tuple {0:?} is off the hyperplane")]
    OffHyperplane(Vec<f64>),

    #[error("non-removable resonant singularity at {0:?}")]
    ResonantSingularity(Vec<f64>),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("wrap-around guard: {0}")]
    WrapAround(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("inconclusive fit: {0}")]
    Inconclusive(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}
