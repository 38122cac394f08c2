//! Small dense helpers shared by the estimators.
//!
//! Every covariance inversion goes through [`spd_inverse`]: a Cholesky
//! factorization, one retry with `1e-9·I` added on failure, and an error
//! after that.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub const JITTER: f64 = 1e-9;

/// Relative singular value threshold used by [`numerical_rank`].
pub const RANK_TOL: f64 = 1e-9;

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(m: &Matrix, context: &'static str) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::Dimension {
            context,
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning(context));
    }
    let sym = symmetrize(m);
    if let Some(chol) = sym.clone().cholesky() {
        return Ok(symmetrize(&chol.inverse()));
    }
    let n = sym.nrows();
    let jittered = sym + Matrix::identity(n, n) * JITTER;
    match jittered.cholesky() {
        Some(chol) => Ok(symmetrize(&chol.inverse())),
        None => Err(Error::Conditioning(context)),
    }
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).abs().max() <= tol
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn is_psd(m: &Matrix, tol: f64) -> bool {
    m.nrows() == 0 || min_eigenvalue(m) >= -tol
}

/// Numerical rank: singular values above `RANK_TOL · σ_max`.
pub fn numerical_rank(m: &Matrix) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max <= 0.0 || !max.is_finite() {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * max).count()
}

/// A square-root factor `F` with `F·Fᵀ = cov` for a symmetric PSD `cov`.
///
/// Uses the eigendecomposition so that singular (e.g. all-zero) covariances
/// are accepted.
pub fn psd_factor(cov: &Matrix) -> Matrix {
    let n = cov.nrows();
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    if let Some(chol) = symmetrize(cov).cholesky() {
        return chol.l();
    }
    let eig = SymmetricEigen::new(symmetrize(cov));
    let mut factor = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    factor
}

pub fn trace(m: &Matrix) -> f64 {
    m.diagonal().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_of_diagonal() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 4.0]));
        let inv = spd_inverse(&m, "test").unwrap();
        assert_relative_eq!(inv[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(inv[(1, 1)], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn zero_matrix_gets_jittered() {
        let inv = spd_inverse(&Matrix::zeros(2, 2), "test").unwrap();
        assert_relative_eq!(inv[(0, 0)], 1.0 / JITTER, max_relative = 1e-12);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(spd_inverse(&m, "x"), Err(Error::Conditioning("x")));
    }

    #[test]
    fn rank_of_products() {
        let h = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let g = Matrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert_eq!(numerical_rank(&(&h * &g)), 1);
        let g0 = Matrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(numerical_rank(&(&h * &g0)), 0);
        assert_eq!(numerical_rank(&Matrix::identity(3, 3)), 3);
    }

    #[test]
    fn factor_of_singular_covariance() {
        let cov = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = psd_factor(&cov);
        assert!((&f * f.transpose() - &cov).abs().max() < 1e-12);
        let zero = psd_factor(&Matrix::zeros(2, 2));
        assert_eq!(zero.abs().max(), 0.0);
    }
}
