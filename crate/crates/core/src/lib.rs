//! Radical-ion-pair spin dynamics and chemically induced nuclear polarization.
//!
//! The crate builds the electron–nuclear spin operators of a radical pair,
//! integrates its density matrix under a family of reaction superoperators
//! that differ only in how strongly recombination dephases singlet–triplet
//! coherences, and unravels the dephasing into stochastic projections as an
//! independent check. Closed-form scaling estimates, a classical
//! coupled-pendulum analog, and a scenario/CSV front end sit on top.

pub mod deterministic;
pub mod error;
pub mod estimates;
pub mod numerics;
pub mod pendulum;
pub mod render;
pub mod runner;
pub mod scenario;
pub mod spin_algebra;
pub mod stochastic;
pub mod system;
pub mod units;

pub use error::{Error, Result};
