//! Comparative causal mediation for three-arm randomized experiments.

pub mod adjust;
pub mod data;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod ols;
mod qr;
pub mod rng;
pub mod simulate;

pub use error::{CcmError, Result};
