//! Volatility-smile arbitrage diagnostics built around the SVI
//! parameterization.
//!
//! - [`pricing`]: Black-76 prices, normal CDF and its inverse, implied vols.
//! - [`svi`]: SVI variance, analytic derivatives, wing slopes and the
//!   local-volatility denominator `g`.
//! - [`bounds`]: wing-slope limits (Gatheral, Lee, practical extreme-strike
//!   bound) and the `d₁` limit classification.
//! - [`scan`]: call-spread and butterfly arbitrage scans over log-uniform
//!   strike grids.
//! - [`calibration`]: multi-start constrained least-squares SVI fits.
//! - [`cli`]: CSV/JSON plumbing behind the `svi-guard` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod calibration;
pub mod cli;
pub mod error;
pub mod exec;
pub mod pricing;
pub mod scan;
pub mod svi;

pub use error::{Error, Result};
pub use exec::Execution;
