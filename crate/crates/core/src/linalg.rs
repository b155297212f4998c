//! Least-squares kernels shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size below which an orthogonalized column counts as collinear.
const RANK_TOL: f64 = 1e-9;

/// Residual norm, relative to the outcome norm, below which the fit is exact
/// and the residuals are set to zero.
const EXACT_FIT_TOL: f64 = 64.0 * f64::EPSILON;

/// Ordinary least squares solution with the pieces needed for sandwich
/// covariances.
#[derive(Debug, Clone)]
pub struct OlsSolution {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `(X'X)^{-1}`
    pub bread: DMatrix<f64>,
}

/// Solves `min ||y - X b||` through a thin QR factorization.
///
/// `names` labels the columns of `x` for singularity reports.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<OlsSolution> {
    let (n, k) = x.shape();
    debug_assert_eq!(names.len(), k);
    if n < k {
        return Err(Error::Data(format!(
            "{n} observations for {k} regressors"
        )));
    }
    if k == 0 {
        return Ok(OlsSolution {
            coefficients: DVector::zeros(0),
            residuals: y.clone(),
            bread: DMatrix::zeros(0, 0),
        });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..k {
        let norm = x.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * norm {
            return Err(Error::Singular {
                column: names.get(j).cloned().unwrap_or_else(|| format!("#{j}")),
            });
        }
    }
    let qty = qr.q().transpose() * y;
    let coefficients = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Numerical("triangular inverse failed".into()))?;
    let bread = &r_inv * r_inv.transpose();
    let mut residuals = y - x * &coefficients;
    if residuals.norm() <= EXACT_FIT_TOL * y.norm() {
        residuals.fill(0.0);
    }
    Ok(OlsSolution {
        coefficients,
        residuals,
        bread: symmetrize(bread),
    })
}

pub fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Row-major table of columns into an `n x k` matrix.
pub fn matrix_from_columns(columns: &[Vec<f64>], nrows: usize) -> DMatrix<f64> {
    DMatrix::from_fn(nrows, columns.len(), |i, j| columns[j][i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn exact_fit() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let sol = ols(&x, &y, &names(2)).unwrap();
        assert_abs_diff_eq!(sol.coefficients[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.coefficients[1], 2.0, epsilon = 1e-12);
        assert!(sol.residuals.amax() < 1e-12);
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        assert!((sol.bread - xtx_inv).amax() < 1e-12);
    }

    #[test]
    fn collinear_column_is_named() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        match ols(&x, &y, &names(2)) {
            Err(Error::Singular { column }) => assert_eq!(column, "x1"),
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn zero_column_is_singular() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(ols(&x, &y, &names(2)), Err(Error::Singular { .. })));
    }
}
