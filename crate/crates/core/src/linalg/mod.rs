//! Dense real linear algebra.
//!
//! A row-major [`Matrix`] plus the three factorizations the learning modules
//! need: [`cholesky`], the symmetric eigensolver [`eigh`] (cyclic Jacobi) and
//! the symmetric-definite generalized problem [`gen_eigh`].

mod cholesky;
mod eigen;
mod matrix;

pub use cholesky::{cholesky, solve_lower, solve_lower_transpose};
pub use eigen::{eigh, gen_eigh, sym_inv_sqrt, sym_pinv, EigenResult, MAX_SWEEPS};
pub use matrix::Matrix;

use thiserror::Error;

/// Relative tolerance on `max |a_ij - a_ji|` accepted as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("Jacobi sweeps did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("matrix has a zero dimension")]
    Empty,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// Checks squareness and symmetry, returning the symmetrized copy `(A + Aᵀ)/2`.
pub(crate) fn symmetrized(a: &Matrix) -> Result<Matrix, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    let n = a.rows();
    let scale = a.max_abs();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    let asymmetry = if scale > 0.0 { worst / scale } else { 0.0 };
    if asymmetry > SYMMETRY_TOL {
        return Err(LinalgError::NotSymmetric { asymmetry });
    }
    let mut s = a.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            s[(i, j)] = m;
            s[(j, i)] = m;
        }
    }
    Ok(s)
}
