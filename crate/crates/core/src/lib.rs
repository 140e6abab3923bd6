//! Truncated regular-vine copula models for calibrating multiple tests.
//!
//! The crate fits a vine copula to multivariate data, uses its first trees to
//! split the test statistics into blocks of strongly dependent coordinates, and
//! calibrates a single-step multiple test for family-wise error control via
//! block-wise effective numbers of tests.

pub mod error;
pub mod numerics;
pub mod matrix;
pub mod pair_copulas;
pub mod vine_model;
pub mod io;
pub mod dissmann;
pub mod sampler;
pub mod grouping;
pub mod meff;
pub mod experiments;

pub use error::{Error, Result};
pub use matrix::Matrix;
