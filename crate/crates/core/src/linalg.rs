//! Small dense helpers shared by the estimators.

use alloc::format;
use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::error::{Error, Result};

/// Inverse and log-determinant of a symmetric positive-definite matrix.
pub fn spd_inverse_logdet(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let chol = m.clone().cholesky().ok_or_else(|| {
        Error::Numerical(format!(
            "{}x{} matrix is not positive definite",
            m.nrows(),
            m.ncols()
        ))
    })?;
    let logdet = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>();
    Ok((chol.inverse(), logdet))
}

pub fn spd_logdet(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m.clone().cholesky().ok_or_else(|| {
        Error::Numerical(format!(
            "{}x{} matrix is not positive definite",
            m.nrows(),
            m.ncols()
        ))
    })?;
    Ok(2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>())
}

/// Solves `(XᵀX + ridge·diag(XᵀX)) b = Xᵀy` given the cross products; also
/// returns the Cholesky factor for reuse.
pub fn ridge_solve(
    xtx: &DMatrix<f64>,
    xty: &DVector<f64>,
    ridge: f64,
) -> Result<(DVector<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let mut a = xtx.clone();
    for i in 0..a.nrows() {
        let d = a[(i, i)];
        a[(i, i)] = d + ridge * if d > 0.0 { d } else { 1.0 };
    }
    let chol = a.cholesky().ok_or_else(|| {
        Error::Numerical("ridge-stabilized cross-product is not positive definite".into())
    })?;
    let b = chol.solve(xty);
    Ok((b, chol))
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n − 1 divisor (0 for fewer than two values).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
