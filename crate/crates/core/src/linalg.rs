//! Small dense helpers shared by the posterior and estimation code.

use nalgebra::{DMatrix, DVector};

use crate::error::{EbmError, Result};

/// Tolerance under which a negative eigenvalue / variance is treated as round-off.
pub const NEG_TOLERANCE: f64 = 1e-8;

/// Replace `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let sym = symmetrized(m.clone());
    let chol = sym
        .cholesky()
        .ok_or_else(|| EbmError::numerical(format!("{context}: matrix is not positive definite")))?;
    Ok(symmetrized(chol.inverse()))
}

/// Solve `m z = rhs` for symmetric positive-definite `m`.
pub fn spd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    let sym = symmetrized(m.clone());
    let chol = sym
        .cholesky()
        .ok_or_else(|| EbmError::numerical(format!("{context}: matrix is not positive definite")))?;
    Ok(chol.solve(rhs))
}

/// Lower-triangular `L` with `L Lᵀ = m` for symmetric PSD `m`.
///
/// Falls back to an eigen square root when Cholesky fails on a singular but
/// PSD matrix; eigenvalues below `-NEG_TOLERANCE` are an error.
pub fn psd_factor(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let sym = symmetrized(m.clone());
    if let Some(chol) = sym.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = sym.symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -NEG_TOLERANCE {
            return Err(EbmError::numerical(format!(
                "{context}: covariance has eigenvalue {lam:e}"
            )));
        }
        let s = lam.max(0.0).sqrt();
        scaled.column_mut(j).scale_mut(s);
    }
    Ok(scaled)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrized(m.clone())
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrized(m.clone())
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Operator (spectral) norm of a symmetric matrix.
pub fn sym_operator_norm(m: &DMatrix<f64>) -> f64 {
    symmetrized(m.clone()).symmetric_eigen().eigenvalues.amax()
}
