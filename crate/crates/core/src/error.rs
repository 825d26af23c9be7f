use thiserror::Error;

use crate::qp_filter::{CompatibilityWitness, FailedCondition};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("class-K function has no inverse rule")]
    UnsupportedInverse,

    #[error("history query at t = {t} outside buffered span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("non-finite value produced by integration at t = {t}")]
    NumericFailure { t: f64 },

    #[error("barrier misuse: {0}")]
    BarrierMisuse(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("initial input history violates {barrier} at t = {t}")]
    UnsafeInitialHistory { t: f64, barrier: &'static str },

    #[error("safety filter infeasible at step {step} (t = {t}), failed condition {failed:?}")]
    Infeasible {
        step: usize,
        t: f64,
        failed: FailedCondition,
        witness: Box<CompatibilityWitness<f64>>,
    },
}
