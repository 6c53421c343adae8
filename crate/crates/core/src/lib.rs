//! Simulation and verification toolkit for one-dimensional Brownian particles
//! with a short-range pair potential at vanishing temperature.
//!
//! * [`potential`]: the pair potential, its structural constants and thresholds.
//! * [`microsim`]: Euler–Maruyama integration of the particle SDE and the
//!   noiseless gradient flow.
//! * [`diagnostics`]: chain decomposition, tubes, stopping times, segments.
//! * [`macroprocess`]: coalescing Brownian rods and the exact two-rod sampler.
//! * [`harness`]: configuration, statistics, and the five replica experiments.

pub mod error;
pub mod numerics;
pub mod diagnostics;
pub mod microsim;
pub mod harness;
pub mod macroprocess;
pub mod potential;

pub use error::{Error, Result};
