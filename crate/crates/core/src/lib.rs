//! Empirical Bayes tools for large-scale simultaneous inference.
//!
//! The crate turns per-case test statistics into z-values, estimates tail
//! false discovery rates under a theoretical or empirical null, shrinks
//! estimates with James–Stein and Tweedie's formula, and ships the Monte
//! Carlo harness used to check those procedures.

pub mod distributions;
pub mod effect_size;
pub mod empirical_null;
pub mod error;
pub mod fdr;
pub mod io;
pub mod relevance;
pub mod sample;
pub mod shrinkage;
pub mod simlab;
pub mod spline;
pub mod zpipeline;
pub mod zvector;

pub use error::{Error, Result};
pub use zvector::ZVector;
