//! Numerics for perturbed two-dimensional quantum wells in a magnetic field:
//! many-eigenpair solvers, level statistics and scar subspectra.

pub mod analytic;
pub mod error;
pub mod model;
pub mod operator;
pub mod solver;
pub mod spectra;
pub mod stats;
pub mod subspectrum;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
