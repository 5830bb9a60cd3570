//! Adaptive compliance toolkit: directional stiffness, admittance control,
//! contact feasibility analysis, demonstration labeling, wrench signal
//! processing and a planar pivoting simulator.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compliance;
pub mod contact;
pub mod episode;
pub mod error;
pub mod labeling;
pub mod se3;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
