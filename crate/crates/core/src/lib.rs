#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod jko;
pub mod nn;
pub mod oracles;
pub mod par;
pub mod phase_space;
pub mod pic;
pub mod presets;
pub mod rng;
pub mod runner;
pub mod sampling;

pub use error::{Error, Result};
