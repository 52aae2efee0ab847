use alloc::vec::Vec;

use super::cholesky::{cholesky, solve_lower, solve_lower_transpose};
use super::{symmetrized, LinalgError, Matrix};

/// Sweep cap for the cyclic Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;

/// Converged once `off(A) <= CONVERGENCE_TOL * ‖A‖_F`.
const CONVERGENCE_TOL: f64 = 1e-12;

/// Eigenpairs sorted by descending eigenvalue.
///
/// Column `i` of `vectors` belongs to `values[i]`. The first nonzero entry of
/// every column is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn eigh(a: &Matrix) -> Result<EigenResult, LinalgError> {
    let mut a = symmetrized(a)?;
    let n = a.rows();
    let mut v = Matrix::identity(n);
    let norm = a.frobenius();
    let tol = CONVERGENCE_TOL * norm;

    let mut converged = false;
    for _ in 0..=MAX_SWEEPS {
        if off_diagonal_norm(&a) <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    Ok(sorted_result(&diag, &v))
}

/// Solves `A v = λ B v` for symmetric `A` and symmetric positive-definite `B`.
///
/// Reduces to `L⁻¹ A L⁻ᵀ` with `B = L Lᵀ`; the returned vectors satisfy
/// `Vᵀ B V = I`.
pub fn gen_eigh(a: &Matrix, b: &Matrix) -> Result<EigenResult, LinalgError> {
    let a = symmetrized(a)?;
    if a.rows() != b.rows() || !b.is_square() {
        return Err(LinalgError::ShapeMismatch("gen_eigh operands differ in shape"));
    }
    let l = cholesky(b)?;
    // C = L⁻¹ A L⁻ᵀ, built as (L⁻¹ (L⁻¹ A)ᵀ)ᵀ using the symmetry of A.
    let y = solve_lower(&l, &a);
    let c = solve_lower(&l, &y.transpose()).transpose().symmetric_part();
    let reduced = eigh(&c)?;
    let mut vectors = solve_lower_transpose(&l, &reduced.vectors);
    for j in 0..vectors.cols() {
        normalize_sign(&mut vectors, j);
    }
    Ok(EigenResult { values: reduced.values, vectors })
}

/// `A^{-1/2}` for symmetric positive semi-definite `A`; eigenvalues at or below
/// `rel_cutoff * λ_max` are dropped (pseudo-inverse).
pub fn sym_inv_sqrt(a: &Matrix, rel_cutoff: f64) -> Result<Matrix, LinalgError> {
    spectral_map(a, rel_cutoff, |l| 1.0 / libm::sqrt(l))
}

/// Moore-Penrose pseudo-inverse of symmetric `A` with the same cutoff rule.
pub fn sym_pinv(a: &Matrix, rel_cutoff: f64) -> Result<Matrix, LinalgError> {
    spectral_map(a, rel_cutoff, |l| 1.0 / l)
}

fn spectral_map(a: &Matrix, rel_cutoff: f64, f: impl Fn(f64) -> f64) -> Result<Matrix, LinalgError> {
    let eig = eigh(a)?;
    let n = a.rows();
    let lmax = eig.values.first().copied().unwrap_or(0.0);
    let cutoff = rel_cutoff * lmax;
    let mut out = Matrix::zeros(n, n);
    for (k, &l) in eig.values.iter().enumerate() {
        if !(l > cutoff) || l <= 0.0 {
            continue;
        }
        let w = f(l);
        for i in 0..n {
            let vik = eig.vectors[(i, k)] * w;
            if vik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[(i, j)] += vik * eig.vectors[(j, k)];
            }
        }
    }
    Ok(out.symmetric_part())
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    libm::sqrt(s)
}

/// One Jacobi rotation annihilating `a[p][q]`; accumulates into `v`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = a.rows();
    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = {
        let mag = 1.0 / (theta.abs() + libm::sqrt(theta * theta + 1.0));
        if theta < 0.0 {
            -mag
        } else {
            mag
        }
    };
    let c = 1.0 / libm::sqrt(t * t + 1.0);
    let s = t * c;

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

fn sorted_result(diag: &[f64], v: &Matrix) -> EigenResult {
    let n = diag.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable: equal eigenvalues keep their diagonal order.
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap_or(core::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    for j in 0..n {
        normalize_sign(&mut vectors, j);
    }
    EigenResult { values, vectors }
}

/// Makes the first nonzero entry of column `j` positive.
fn normalize_sign(m: &mut Matrix, j: usize) {
    let scale = (0..m.rows()).fold(0.0f64, |acc, i| acc.max(m[(i, j)].abs()));
    let floor = 1e-12 * scale;
    if let Some(i) = (0..m.rows()).find(|&i| m[(i, j)].abs() > floor) {
        if m[(i, j)] < 0.0 {
            for r in 0..m.rows() {
                m[(r, j)] = -m[(r, j)];
            }
        }
    }
}
