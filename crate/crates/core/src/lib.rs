//! Detection and correction of model mismatch errors in pooled testing.

pub mod cli;
pub mod corrector;
pub mod debias;
pub mod detector;
pub mod error;
pub mod evalbench;
pub mod numfmt;
pub mod rng;
pub mod simkit;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
