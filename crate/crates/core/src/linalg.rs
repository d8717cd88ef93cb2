//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn is_pd(a: &DMatrix<f64>) -> bool {
    a.clone().cholesky().is_some()
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Lower-triangular factor `L` with `L Lᵀ ≈ cov`, after clipping eigenvalues
/// below `floor`. Fails when an eigenvalue is below `-neg_tol`.
pub fn psd_factor(cov: &DMatrix<f64>, floor: f64, neg_tol: f64) -> Result<DMatrix<f64>> {
    let sym = symmetrize(cov);
    if let Some(ch) = sym.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -neg_tol {
        return Err(Error::InvalidCovariance { min_eigenvalue: min });
    }
    let clipped = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&v| v.max(floor)));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let rebuilt = symmetrize(&rebuilt);
    match rebuilt.clone().cholesky() {
        Some(ch) => Ok(ch.l()),
        // Clipping at a tiny floor can still leave round-off negative pivots;
        // fall back to the symmetric square root, which is a valid factor.
        None => Ok(&eig.eigenvectors * DMatrix::from_diagonal(&clipped.map(f64::sqrt))),
    }
}

/// Cross product `XᵀX / n`.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    symmetrize(&(x.tr_mul(x) / n))
}

/// `log det` of a positive-definite matrix, `None` when not PD.
pub fn log_det_pd(a: &DMatrix<f64>) -> Option<f64> {
    let ch = a.clone().cholesky()?;
    Some(2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

pub fn all_finite(a: &DMatrix<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}
