//! Safety-critical control of input-delayed systems with integral control
//! barrier functions.
//!
//! The numerical core ([`numerics`], [`predictor`], [`barriers`],
//! [`qp_filter`], [`acc`]) is generic over the scalar type; the scenario
//! engine ([`sim`]), file formats ([`config`], [`output`]) and diagnostics
//! ([`feasibility`], [`selftest`]) work in `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acc;
pub mod barriers;
pub mod config;
pub mod error;
pub mod feasibility;
pub mod numerics;
pub mod output;
pub mod predictor;
pub mod qp_filter;
pub mod scalar;
pub mod selftest;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ClassKFnF64 = numerics::ClassKFn<f64>;
pub type ClassKFnF32 = numerics::ClassKFn<f32>;
pub type ConstraintRowF64 = barriers::ConstraintRow<f64>;
pub type ConstraintRowF32 = barriers::ConstraintRow<f32>;
pub type FilterResultF64 = qp_filter::FilterResult<f64>;
pub type FilterResultF32 = qp_filter::FilterResult<f32>;
pub type AccParamsF64 = acc::AccParams<f64>;
pub type AccParamsF32 = acc::AccParams<f32>;
pub type AccSystemF64 = acc::AccSystem<f64>;
pub type AccSystemF32 = acc::AccSystem<f32>;
/// Single-input history, the shape used by the ACC scenarios.
pub type InputHistoryF64 = numerics::InputHistory<f64, 1>;
