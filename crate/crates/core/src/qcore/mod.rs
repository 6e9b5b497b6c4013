//! Small-N complex linear algebra shared by every other module.

mod basis;
mod matrix;
mod spectral;

pub use basis::{
    expand, gell_mann_basis, hermitian_basis, reconstruct, GellMannBasis, HermitianBasis,
};
pub(crate) use basis::{expand_unchecked, reconstruct_unchecked};
pub use matrix::{
    lowering, number, pauli_x, pauli_y, pauli_z, ComplexMatrix, DensityMatrix, C64, HERMITIAN_TOL,
    I, ONE, TRACE_TOL, ZERO,
};
pub use spectral::{eigh, min_eigenvalue, spectral_filter, trace_distance, Eigh};
