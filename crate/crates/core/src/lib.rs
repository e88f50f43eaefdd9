//! Learning drift and diffusion coefficients of Itô processes from irregular,
//! incomplete observations with neural jump ODEs, and generating new sample
//! paths from the learned coefficients.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod generator;
pub mod losses;
pub mod njode;
pub mod nn;
pub mod path_sim;
pub mod plot;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
