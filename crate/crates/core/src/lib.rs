//! Periodic unit-cell homogenization for anisotropic elastic media.
//!
//! The crate solves the cell problems of two-scale homogenization on the
//! torus `[0,1]^d` (d = 2 or 3) with a Fourier-spectral discretization,
//! assembles the effective stiffness and the dispersive correction tensors of
//! the fourth-order long-wave model, and checks them against independent
//! laminate and Floquet-Bloch references. A small module evaluates the
//! exterior Dirichlet-to-Neumann coefficients for the isotropic Navier
//! operator on a sphere.

pub mod bloch;
pub mod correctors;
pub mod dtn;
pub mod effective;
pub mod error;
pub mod field;
pub mod laminate;
pub mod medium;
pub mod solver;
pub mod tensor;
pub mod verify;

pub use error::{HomogError, Result};
pub use field::{cell_average, spectral_divergence, spectral_gradient, CellField, CellGrid};
pub use medium::{build_medium, Material, Medium, MediumKind, MediumSpec, TrigField};
pub use solver::{apply_operator, solve_periodic, CellSolver, Preconditioner, SolveReport, SolverConfig};
pub use tensor::{
    apply_tensor, check_symmetries, convexity_margin, isotropic_tensor, LamePair, SymmetryDefects,
    Tensor4, TensorN,
};
