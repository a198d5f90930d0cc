//! Analysis of power-controlled Hamiltonian (PwH) systems: port-Hamiltonian
//! dynamics whose inputs act directly on the power balance, such as DC grids
//! feeding constant power loads and synchronous generators.
//!
//! The crate builds models, finds and classifies equilibria, certifies shifted
//! passivity and local stability, computes sublevel-set estimates of the region
//! of attraction, and checks every certificate by simulation.

pub mod equilibrium;
pub mod error;
pub mod model;
pub mod modelfile;
pub mod numkernel;
pub mod roa;
pub mod shifted;
pub mod sim;

pub use error::{Error, Result};
