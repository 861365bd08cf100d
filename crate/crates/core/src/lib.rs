//! Deterministic highway simulation with a shadow autopilot that previews
//! its would-be lane changes and their predicted consequences, plus the
//! scoring pipeline for lane-switch timing studies.

// `!(x > 0.0)` is the NaN-rejecting form used by every validator.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod api;
pub mod delegate;
pub mod error;
pub mod explain;
pub mod harness;
pub mod mpc;
pub mod predict;
pub mod scenario;
pub mod session;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
