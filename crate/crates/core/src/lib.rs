//! Binary-action coordination games with i.i.d. random utility on weighted
//! networks: threshold distributions, best-response dynamics, equilibrium
//! selection diagnostics, contagion waves and lattice cube analysis.
//!
//! The step-function algebra, network statistics and lens geometry are
//! generic over [`Scalar`] (`f32` or `f64`); the simulation layers run in
//! `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contagion;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod lattice;
pub mod network;
pub mod numfmt;
pub mod rng;
pub mod scalar;
pub mod stepfn;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use stepfn::StepFn;

pub type StepFn64 = stepfn::StepFn<f64>;
pub type StepFn32 = stepfn::StepFn<f32>;
pub type Network64 = network::Network<f64>;
pub type Network32 = network::Network<f32>;
pub type Profile64 = network::Profile<f64>;
pub type Profile32 = network::Profile<f32>;
