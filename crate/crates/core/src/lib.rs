//! Simultaneous state and unknown-input estimation for linear
//! time-varying continuous-time stochastic systems.
//!
//! The crate provides the two estimators (`elise`, which consumes an
//! auxiliary output-derivative measurement, and `alise`, which replaces it
//! by a backward finite difference under Gauss–Markov noise), the analytic
//! SVD machinery behind the output decoupling, a separation-principle
//! controller, stability and consistency diagnostics, and a Monte Carlo
//! harness with two worked scenarios.

pub mod alise;
pub mod analysis;
pub mod asvd;
pub mod control;
pub mod elise;
pub mod error;
pub mod harness;
pub mod lincore;
pub mod sysmodel;

pub use error::{LiseError, Result};
