//! Exact diagonalization of a few bosons in a rotating, weakly anisotropic
//! two-dimensional harmonic trap, across Landau-level truncations.

pub mod basis;
pub mod cli;
pub mod config;
pub mod eigensolver;
pub mod error;
pub mod hamiltonian;
pub mod matelems;
pub mod observables;
pub mod quadrature;
pub mod scanner;

pub use error::{ConfigError, Error, Result};
