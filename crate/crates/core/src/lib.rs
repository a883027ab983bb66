//! Localization landscape toolkit for Anderson-type Schrödinger operators
//! `-Δu + K V u = λ u` with random lattice potentials.

pub mod bifurcation;
pub mod error;
pub mod experiments;
pub mod landscape;
pub mod operator;
pub mod partition;
pub mod potential;
pub mod rng;
pub mod runstats;
pub mod solver;
pub mod sparse;
pub mod stochastic;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
