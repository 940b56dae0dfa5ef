//! Tomographic reconstruction with total-variation regularisation of both
//! the image and its sinogram, for Poisson-corrupted PET data.
//!
//! The main entry points are [`geometry::SystemMatrix`] (the discrete Radon
//! transform), [`solver::reconstruct_joint`] (split Bregman for the joint
//! model), [`solver::sinogram_rof`] (weighted ROF denoising of a sinogram) and
//! [`oracle::solve_kappa`] (the closed-form disc solution used to check the
//! ROF solver).

pub mod cli;
pub mod error;
pub mod geometry;
pub mod fbp;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod operators;
pub mod oracle;
pub mod phantoms;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{ScanGeometry, SystemMatrix};
pub use grid::{ImageGrid, Sinogram};
