//! Multi-level neural network (MLNN) surrogates for PDEs with uncertain parameters.
//!
//! A coarse-grid solve is corrected by a chain of learned inter-level error maps; the
//! crate also ships the finite-difference solvers used to generate data and a multi-level
//! stochastic collocation baseline for cost comparisons.

pub mod error;
pub mod mlsc;
pub mod multilevel;
pub mod nn;
pub mod pde;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{relu, Tensor};
