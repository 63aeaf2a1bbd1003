//! Small dense least-squares helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{FnnError, Result};

// Relative threshold on |R_ii| below which a column is treated as dependent.
const RANK_TOL: f64 = 1e-10;
// Smallest admissible ratio of squared Cholesky pivots.
const SPD_TOL: f64 = 1e-14;

/// Least squares `argmin ||A x − b||` via Householder QR.
pub fn lstsq_qr(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (rows, cols) = a.shape();
    if rows < cols {
        return Err(FnnError::Underdetermined {
            points: rows,
            params: cols,
        });
    }
    if b.len() != rows {
        return Err(FnnError::DimensionMismatch(format!(
            "{rows}-row design with {}-entry response",
            b.len()
        )));
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    if let Some(i) = r
        .diagonal()
        .iter()
        .position(|d| d.abs() <= RANK_TOL * diag_max.max(f64::MIN_POSITIVE))
    {
        return Err(FnnError::RankDeficient(format!(
            "design column {i} is linearly dependent on earlier columns"
        )));
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
        .ok_or_else(|| FnnError::RankDeficient("triangular solve failed".into()))
}

/// Solves a symmetric positive-definite system by Cholesky.
pub fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let a_diag = a.diagonal();
    let chol = a.cholesky().ok_or_else(|| {
        FnnError::RankDeficient("normal equations are not positive definite".into())
    })?;
    // Share of each column's norm not explained by the preceding columns.
    let singular = chol
        .l_dirty()
        .diagonal()
        .iter()
        .zip(a_diag.iter())
        .any(|(l, d)| l * l <= SPD_TOL * d);
    if singular {
        return Err(FnnError::RankDeficient(
            "normal equations are numerically singular".into(),
        ));
    }
    let x = chol.solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FnnError::Numeric("non-finite solution".into()));
    }
    Ok(x)
}

/// Minimum-norm least squares through the SVD pseudo-inverse.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.amax();
    let eps = 1e-10 * smax.max(f64::MIN_POSITIVE);
    svd.solve(b, eps)
        .map_err(|e| FnnError::Numeric(format!("SVD solve failed: {e}")))
}
