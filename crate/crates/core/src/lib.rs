//! Numerical workbench for entropy power inequalities under dependence.
//!
//! The crate provides two interchangeable density backends (closed-form
//! Gaussians and tensor grids), the information functionals built on them
//! (entropy, entropy power, conditional and erasure entropy, blockwise score
//! fields and Fisher information matrices), the Ornstein-Uhlenbeck flow with
//! its quantitative remainder integrals, log-supermodularity certification,
//! and a harness that packages each inequality as a verification with an
//! explicit margin and error budget.

pub mod density;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod harness;
pub mod numeric;
pub mod supermodular;

pub use density::{
    gaussian_to_grid, BlockStructure, Density, GaussianDensity, GridAxis, GridDensity, ScaleMode,
    Weights,
};
pub use error::{Error, Result};
