//! Two-type linear-fractional branching processes in varying environments.
//!
//! The crate computes the law of the extinction time exactly (by matrix
//! products or by a continued-fraction route), evaluates asymptotic
//! predictors for the tail and point masses, checks regularity conditions
//! on an environment, and runs seeded Monte Carlo simulations.

pub mod asymptotics;
pub mod cfrac;
pub mod config;
pub mod dist;
pub mod env;
pub mod error;
pub mod linalg2;
pub mod report;
pub mod sim;
pub mod transform;

pub use error::{Error, Result};
