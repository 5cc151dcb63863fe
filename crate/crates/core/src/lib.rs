//! Taylor-Hood finite elements for the incompressible Navier-Stokes
//! equations with the energy-, momentum- and angular-momentum-conserving
//! (EMAC) inertial term, integrated in time by a one-level nonlinear scheme
//! or by two-level schemes that solve the nonlinear problem on a coarse mesh
//! and correct it with one linear solve on a nested fine mesh.

pub mod diagnostics;
pub mod error;
pub mod fespace;
pub mod forms;
pub mod linalg;
pub mod mesh;
pub mod problems;
pub mod solvers;

pub use error::{Error, Result};
