//! Transient one-dimensional transport by the method of characteristics,
//! and neural-network estimation of absorption coefficients from boundary
//! scalar-flux detectors.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod mlp;
pub mod problem;
pub mod quadrature;
pub mod solver;
pub mod verification;

pub use error::{Error, Result};
