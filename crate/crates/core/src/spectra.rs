//! Extreme eigenvalues of the symmetric part of a matrix and the infimum of
//! the quadratic form on the unit sphere.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// `Lambda_A`, `lambda_A` (max/min eigenvalue of `(A + A^T)/2`) and
/// `rho_A = inf_{|x|=1} |x^T A x|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralSummary {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub rho: f64,
}

fn check_square(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// `(A + A^T) / 2`.
pub fn symmetric_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(s: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = s.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Since `x^T A x = x^T S x` ranges over `[lambda_min, lambda_max]` on the unit
/// sphere, `rho` is 0 when the range straddles zero and otherwise the endpoint
/// nearest to zero.
pub fn summarize(a: &DMatrix<f64>) -> Result<SpectralSummary> {
    check_square(a)?;
    if a.nrows() == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let ev = symmetric_eigenvalues(&symmetric_part(a));
    let lambda_min = ev[0];
    let lambda_max = ev[ev.len() - 1];
    let rho = if lambda_min < 0.0 && lambda_max > 0.0 {
        0.0
    } else {
        lambda_min.abs().min(lambda_max.abs())
    };
    Ok(SpectralSummary { lambda_max, lambda_min, rho })
}

/// `a(i) = sum_k sigma_k^T sigma_k`.
pub fn a_of_i(sigma_mats: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = sigma_mats
        .first()
        .ok_or_else(|| Error::InvalidArgument("at least one diffusion matrix required".into()))?;
    check_square(first)?;
    let n = first.nrows();
    let mut acc = DMatrix::zeros(n, n);
    for s in sigma_mats {
        check_square(s)?;
        if s.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: s.nrows() });
        }
        acc += s.transpose() * s;
    }
    Ok(acc)
}
