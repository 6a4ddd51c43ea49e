//! Ordinary least squares with classical inference.
//!
//! Solved by Householder QR of the design. Rank is judged from the singular
//! values of the triangular factor: anything below `1e-10 × largest` counts
//! as an exact dependency.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::dataset::DesignMatrix;
use crate::error::{Error, Result};
use crate::special::{f_sf, t_two_sided_p};

/// Relative singular-value cutoff for rank deficiency.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    /// F statistic against the intercept-only model with its (numerator,
    /// denominator) degrees of freedom; absent without an intercept or slopes.
    pub f_statistic: Option<(f64, usize, usize)>,
    pub f_p_value: Option<f64>,
    pub residual_std_error: f64,
    pub df_residual: usize,
    pub n: usize,
    pub has_intercept: bool,
    /// (XᵀX)⁻¹, the unscaled coefficient covariance.
    pub xtx_inverse: DMatrix<f64>,
}

impl RegressionFit {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coefficients[i])
    }

    /// Fitted values on the training design.
    pub fn fitted(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.residuals).map(|(y, e)| y - e).collect()
    }

    pub fn ssr(&self) -> f64 {
        self.residuals.iter().map(|e| e * e).sum()
    }
}

/// Fits `y` on the columns of `x`.
pub fn fit_ols(x: &DesignMatrix, y: &[f64]) -> Result<RegressionFit> {
    fit_matrix(x.names(), x.matrix(), y, x.has_intercept())
}

pub(crate) fn fit_matrix(
    names: &[String],
    x: &DMatrix<f64>,
    y: &[f64],
    has_intercept: bool,
) -> Result<RegressionFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            what: "response length".into(),
            expected: n,
            got: y.len(),
        });
    }
    if n <= k {
        return Err(Error::InsufficientData {
            observations: n,
            parameters: k,
        });
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "non-finite value in regression inputs".into(),
        ));
    }

    let qr = x.clone().qr();
    let r = qr.r();
    check_rank(names, &r)?;

    let mut qty = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, k).into_owned();
    let beta = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;

    let fitted = x * &beta;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(y, f)| y - f).collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let df = n - k;
    let sigma2 = ssr / df as f64;

    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("triangular factor is singular".into()))?;
    let xtx_inverse = &r_inv * r_inv.transpose();

    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let std_errors: Vec<f64> = (0..k)
        .map(|j| (sigma2 * xtx_inverse[(j, j)]).sqrt())
        .collect();
    let t_stats: Vec<f64> = coefficients
        .iter()
        .zip(&std_errors)
        .map(|(b, se)| if *se == 0.0 && *b == 0.0 { 0.0 } else { b / se })
        .collect();
    let p_values = t_stats
        .iter()
        .map(|t| t_two_sided_p(*t, df as f64))
        .collect();

    let sst = if has_intercept {
        let m = y.iter().sum::<f64>() / n as f64;
        y.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    } else {
        y.iter().map(|v| v * v).sum::<f64>()
    };
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
    let int = usize::from(has_intercept);
    let adjusted_r_squared = 1.0 - (1.0 - r_squared) * (n - int) as f64 / df as f64;
    let slopes = k - int;
    let (f_statistic, f_p_value) = if has_intercept && slopes > 0 {
        let f = ((sst - ssr) / slopes as f64) / sigma2;
        (
            Some((f, slopes, df)),
            Some(f_sf(f, slopes as f64, df as f64)),
        )
    } else {
        (None, None)
    };

    Ok(RegressionFit {
        names: names.to_vec(),
        coefficients,
        std_errors,
        t_stats,
        p_values,
        residuals,
        r_squared,
        adjusted_r_squared,
        f_statistic,
        f_p_value,
        residual_std_error: sigma2.sqrt(),
        df_residual: df,
        n,
        has_intercept,
        xtx_inverse,
    })
}

fn check_rank(names: &[String], r: &DMatrix<f64>) -> Result<()> {
    let k = r.ncols();
    if k == 0 {
        return Ok(());
    }
    let svd = r.clone().svd(false, true);
    let smax = svd.singular_values.max();
    let cutoff = RANK_TOLERANCE * smax;
    let v_t = svd.v_t.as_ref().expect("requested V");
    let mut dependent: Vec<usize> = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= cutoff || smax == 0.0 {
            let row = v_t.row(i);
            let big = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (j, v) in row.iter().enumerate() {
                if v.abs() > 1e-6 * big && !dependent.contains(&j) {
                    dependent.push(j);
                }
            }
        }
    }
    if dependent.is_empty() {
        return Ok(());
    }
    dependent.sort_unstable();
    Err(Error::RankDeficient {
        columns: dependent.into_iter().map(|j| names[j].clone()).collect(),
    })
}

/// `x · coefficients`; the column names of `x` must equal the fit's.
pub fn predict(fit: &RegressionFit, x: &DesignMatrix) -> Result<Vec<f64>> {
    if x.names() != fit.names.as_slice() {
        let missing: Vec<&str> = fit
            .names
            .iter()
            .filter(|n| !x.names().contains(n))
            .map(|n| n.as_str())
            .collect();
        let extra: Vec<&str> = x
            .names()
            .iter()
            .filter(|n| !fit.names.contains(n))
            .map(|n| n.as_str())
            .collect();
        return Err(Error::Schema(format!(
            "design columns do not match the fit (missing: [{}], unexpected: [{}])",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    let beta = DVector::from_column_slice(&fit.coefficients);
    Ok((x.matrix() * beta).iter().copied().collect())
}

/// Significance stars: `***` p<0.01, `**` p<0.05, `*` p<0.1.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}
