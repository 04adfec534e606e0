use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Domain errors raised by the model, analytics, optimizer and simulator.
///
/// Messages name the violated inequality so that front ends can surface them
/// verbatim.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid deadline: deadline <= t_min ({deadline} <= {t_min})")]
    InvalidDeadline { deadline: f64, t_min: f64 },

    #[error("invalid window: {condition}")]
    InvalidWindow { condition: String },

    #[error("divergent moment: {condition}")]
    DivergentMoment { condition: String },

    #[error("quadrature failure: {reason}")]
    QuadratureFailure { reason: String },

    #[error("invalid floor: floor < t_min ({floor} < {t_min})")]
    InvalidFloor { floor: f64, t_min: f64 },

    #[error("no progress: CP <= FP ({cp} <= {fp})")]
    NoProgress { fp: f64, cp: f64 },

    #[error("invalid times: {condition}")]
    InvalidTimes { condition: String },

    #[error("search cap reached: utility still increasing at r_cap = {r_cap}")]
    SearchCapReached { r_cap: u32 },

    #[error("degenerate sample: all {n} samples are equal, beta is unbounded")]
    DegenerateSample { n: usize },

    #[error("insufficient samples: need at least 2 positive samples, got {n}")]
    InsufficientSamples { n: usize },

    #[error("invalid range `{name}`: {reason}")]
    InvalidRange { name: &'static str, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn divergent(condition: impl Into<String>) -> Self {
        Error::DivergentMoment {
            condition: condition.into(),
        }
    }

    pub(crate) fn window(condition: impl Into<String>) -> Self {
        Error::InvalidWindow {
            condition: condition.into(),
        }
    }
}
