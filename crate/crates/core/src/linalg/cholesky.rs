use super::{symmetrized, LinalgError, Matrix};

/// Pivots at or below this fraction of `trace(A)/n` are rejected.
const PIVOT_TOL: f64 = 1e-12;

/// Lower-triangular `L` with `L Lᵀ = A` for symmetric positive-definite `A`.
pub fn cholesky(a: &Matrix) -> Result<Matrix, LinalgError> {
    let a = symmetrized(a)?;
    let n = a.rows();
    let floor = (PIVOT_TOL * (a.trace() / n as f64)).max(0.0);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return Err(LinalgError::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = libm::sqrt(d);
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn solve_lower(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows();
    assert_eq!(b.rows(), n);
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Solves `Lᵀ X = B` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows();
    assert_eq!(b.rows(), n);
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factorizes_to_identity() {
        assert_eq!(cholesky(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
    }

    #[test]
    fn hand_factorization() {
        let a = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        assert!((l[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((l[(1, 1)] - core::f64::consts::SQRT_2).abs() < 1e-15);
        let back = l.matmul(&l.transpose());
        assert!(back.sub(&a).frobenius() <= 1e-10 * a.frobenius());
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&a), Err(LinalgError::NotPositiveDefinite { index: 1, .. })));
    }

    #[test]
    fn shape_and_symmetry_errors() {
        let rect = Matrix::zeros(2, 3);
        assert_eq!(cholesky(&rect), Err(LinalgError::NotSquare { rows: 2, cols: 3 }));
        let asym = Matrix::from_rows(&[[2.0, 1.0], [0.0, 2.0]]).unwrap();
        assert!(matches!(cholesky(&asym), Err(LinalgError::NotSymmetric { .. })));
    }

    #[test]
    fn triangular_solves() {
        let l = Matrix::from_rows(&[[2.0, 0.0], [1.0, 3.0]]).unwrap();
        let b = Matrix::from_rows(&[[2.0], [7.0]]).unwrap();
        let x = solve_lower(&l, &b);
        assert_eq!(l.matmul(&x), b);
        let y = solve_lower_transpose(&l, &b);
        assert!(l.transpose().matmul(&y).sub(&b).frobenius() < 1e-14);
    }
}
