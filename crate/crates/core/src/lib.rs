//! Near-field spot beamfocusing with per-subarray TD3 agents, policy propagation and policy blending.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamfocus;
pub mod dnn;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod pdi;
pub mod seed;
pub mod td3;
pub mod transfer;

pub use error::{Error, Result};
