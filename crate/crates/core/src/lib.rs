//! Relaxation of bulk-surface energies for structured deformations.
//!
//! The crate is organised around the objects of the theory:
//!
//! * [`densities`]: bulk, surface and nonlinear densities with axiom checks.
//! * [`fields`]: broken (per-cell affine) fields on 1D/2D meshes and their
//!   measure decomposition.
//! * [`cell_problems`]: the relaxed densities `H_p`, `h_p` and their
//!   recession functions, with a brute-force 1D oracle.
//! * [`relaxation`]: the relaxed functional `I_p` and density tables.
//! * [`approximation`]: the constructive approximation `u_n = g + h − h_n`.
//! * [`linearization`]: nonsimple energies, rigidity diagnostics and the
//!   Γ-gap experiment.

pub mod approximation;
pub mod cell_problems;
pub mod densities;
pub mod error;
pub mod fields;
pub mod linearization;
pub mod quadrature;
pub mod relaxation;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Hess, Mat, Vector};
