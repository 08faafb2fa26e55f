//! Small dense linear-algebra helpers: a scaled Cholesky factorization for
//! covariance matrices that may be numerically singular, and a symmetric
//! square root.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivots of the correlation-scaled matrix within this (times its trace) of
/// zero are clipped to zero instead of rejected.
pub const PSD_TOLERANCE: f64 = 1e-13;

/// Lower-triangular `L` with `L Lᵀ = sigma`.
///
/// The factorization runs on the correlation matrix `D⁻¹ Σ D⁻¹`, with
/// `D = diag(√Σᵢᵢ)`, and the result is rescaled by `D`. Covariances of
/// integrated Brownian functionals have diagonal entries spanning many
/// orders of magnitude; the scaled matrix has unit diagonal and keeps the
/// pivots well conditioned. The elimination order is row by row, so the
/// leading `k×k` block of the factor only depends on the leading `k×k`
/// block of `sigma`.
pub fn chol_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sigma.nrows();
    if sigma.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sigma.ncols(),
        });
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite covariance entry".into()));
    }
    let tol = PSD_TOLERANCE * n as f64;
    let mut scale = vec![1.0; n];
    for (i, s) in scale.iter_mut().enumerate() {
        let d = sigma[(i, i)];
        if d < -tol * d.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::IndefiniteMatrix {
                pivot: i,
                value: d,
                tolerance: tol,
            });
        }
        if d > 0.0 {
            *s = d.sqrt();
        }
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = sigma[(i, j)] / (scale[i] * scale[j]);
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if acc < -tol {
                    return Err(Error::IndefiniteMatrix {
                        pivot: i,
                        value: acc,
                        tolerance: tol,
                    });
                }
                l[(i, i)] = acc.max(0.0).sqrt();
            } else if l[(j, j)] > 0.0 {
                l[(i, j)] = acc / l[(j, j)];
            } else {
                l[(i, j)] = 0.0;
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            l[(i, j)] *= scale[i];
        }
    }
    Ok(l)
}

/// Relative Frobenius residual `‖L Lᵀ − Σ‖ / ‖Σ‖`.
pub fn chol_residual(sigma: &DMatrix<f64>, l: &DMatrix<f64>) -> f64 {
    let norm = sigma.norm();
    if norm == 0.0 {
        return (l * l.transpose()).norm();
    }
    (l * l.transpose() - sigma).norm() / norm
}

/// Symmetric PSD square root via eigendecomposition. Eigenvalues below
/// `-tol·trace` are rejected, the rest are clipped at zero. Returns the root
/// and whether any clipping of a negative eigenvalue happened.
pub fn sym_sqrt(a: &DMatrix<f64>, tol: f64) -> Result<(DMatrix<f64>, bool)> {
    let sym = 0.5 * (a + a.transpose());
    let eig = sym.symmetric_eigen();
    let trace = eig.eigenvalues.iter().map(|v| v.abs()).sum::<f64>();
    let floor = -tol * trace.max(f64::MIN_POSITIVE);
    let mut clipped = false;
    let mut roots = DVector::<f64>::zeros(eig.eigenvalues.len());
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev < floor {
            return Err(Error::IndefiniteMatrix {
                pivot: i,
                value: ev,
                tolerance: -floor,
            });
        }
        if ev < 0.0 {
            clipped = true;
        }
        roots[i] = ev.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok((q * DMatrix::from_diagonal(&roots) * q.transpose(), clipped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factor() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(chol_factor(&id).unwrap(), id);
    }

    #[test]
    fn diagonal_factor() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let l = chol_factor(&s).unwrap();
        assert_eq!(l, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])));
    }

    #[test]
    fn rejects_indefinite() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            chol_factor(&s),
            Err(Error::IndefiniteMatrix { .. })
        ));
    }

    #[test]
    fn singular_psd_is_accepted() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = chol_factor(&s).unwrap();
        assert!(chol_residual(&s, &l) < 1e-15);
    }

    #[test]
    fn zero_variance_row() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let l = chol_factor(&s).unwrap();
        assert_eq!(l[(1, 1)], 0.0);
        assert!(chol_residual(&s, &l) < 1e-15);
    }

    #[test]
    fn sqrt_squares_back() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (r, clipped) = sym_sqrt(&a, 1e-10).unwrap();
        assert!(!clipped);
        assert!((&r * &r - &a).norm() < 1e-14);
    }
}
