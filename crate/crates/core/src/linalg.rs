//! Small dense linear-algebra helpers shared by the state and scattering code.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Symplectic form for `n` modes in interleaved order (I1, Q1, ..., IN, QN):
/// block-diagonal with `[[0, 1], [-1, 0]]` per mode.
pub fn symplectic_form(n: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        omega[(2 * j, 2 * j + 1)] = 1.0;
        omega[(2 * j + 1, 2 * j)] = -1.0;
    }
    omega
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn hermitian_min_eigenvalue(h: &DMatrix<Complex64>) -> f64 {
    let eig = SymmetricEigen::new(h.clone());
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Hermitian matrix `V + iΩ` for a real quadrature covariance `v`.
pub fn uncertainty_matrix(v: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = v.nrows() / 2;
    let omega = symplectic_form(n);
    DMatrix::from_fn(v.nrows(), v.ncols(), |r, c| Complex64::new(v[(r, c)], omega[(r, c)]))
}

/// Smallest eigenvalue of `V + iΩ`; nonnegative for physical states.
pub fn uncertainty_min_eigenvalue(v: &DMatrix<f64>) -> f64 {
    hermitian_min_eigenvalue(&uncertainty_matrix(v))
}

pub fn min_eigenvalue(v: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(v.clone());
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Symmetric PSD square root. Eigenvalues in `[-tol, 0)` are clipped to zero,
/// anything below `-tol` is rejected.
pub fn psd_sqrt(v: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(v));
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if lmin < -tol {
        return Err(Error::NotPsd(lmin));
    }
    let d = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&d) * q.transpose())
}

pub fn symmetrize(v: &DMatrix<f64>) -> DMatrix<f64> {
    (v + v.transpose()) * 0.5
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_c(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.norm()))
}

/// Permutation taking interleaved order (I1, Q1, ..., IN, QN) to block order
/// (I1, ..., IN, Q1, ..., QN): `block = P * interleaved`.
pub fn interleaved_to_block(n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        p[(j, 2 * j)] = 1.0;
        p[(n + j, 2 * j + 1)] = 1.0;
    }
    p
}

/// Determinant ratio `|det M| / prod_i ||row_i||`, in `[0, 1]` by Hadamard's inequality.
pub fn hadamard_ratio(m: &DMatrix<Complex64>) -> f64 {
    let det = m.clone().lu().determinant().norm();
    let bound: f64 = m.row_iter().map(|r| r.norm()).product();
    if bound == 0.0 {
        0.0
    } else {
        det / bound
    }
}
