//! Second-order cone programming and symmetric-matrix utilities.

mod matrix;
mod program;
mod solver;

pub use matrix::{dot, norm2, Lu, Matrix, SymEigen, SymMatrix};
pub use program::{quad_epigraph, ConeBlock, ConeKind, ConeProgram, QuadEpigraph};
pub use solver::{solve, ConeSolution, SolveStatus, DEFAULT_MAX_ITER, DEFAULT_TOL};

use crate::error::Result;
use crate::scalar::Real;

/// Default clip for tiny negative eigenvalues in `psd_sqrt`.
pub const DEFAULT_CLIP: f64 = 1e-9;

pub fn psd_sqrt<T: Real>(m: &SymMatrix<T>, clip: T) -> Result<SymMatrix<T>> {
    m.psd_sqrt(clip)
}

pub fn min_eig<T: Real>(m: &SymMatrix<T>) -> T {
    m.min_eig()
}

pub fn spectral_shift<T: Real>(m: &SymMatrix<T>) -> SymMatrix<T> {
    m.spectral_shift()
}
