//! Random Euler complex-valued adaptive filters.
//!
//! Widely-linear and strictly-linear filters on random Fourier features of
//! `[Re x; Im x]`, the CLMS and CKLMS baselines, synthetic benchmark
//! scenarios, a mean-square analysis engine and an experiment harness.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod feature_map;
pub mod filters;
pub mod harness;
pub mod rng;
pub mod scenarios;
pub mod theory;

pub use error::{Error, Result};
pub use feature_map::EulerFeatureMap;
pub use filters::{FilterKind, FilterState};
pub use num_complex::Complex64;
