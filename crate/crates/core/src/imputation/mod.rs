//! Missingness diagnosis, multiple imputation by chained equations, and
//! Rubin's rules for combining estimates across imputations.

mod little;
mod mar;
mod mice;

pub use little::{little_mcar_test, LittleTest};
pub use mar::{mar_diagnostic, GroupSummary, MarDiagnostic};
pub use mice::{
    mice_impute, mice_impute_with, Engine, ImputationSet, MiceOptions, VariableTrace, MIN_OBSERVED,
    PMM_DONORS,
};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::Float;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::special::{t_quantile, t_two_sided_p};

#[derive(Debug, Clone, PartialEq)]
pub struct VariableMissingness {
    pub code: String,
    pub missing: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessReport {
    pub n_rows: usize,
    pub variables: Vec<VariableMissingness>,
    /// Missing cells over all cells of the analysed variables.
    pub average_rate: f64,
    pub little: Option<LittleTest>,
    /// Why the test is absent, when it is.
    pub little_note: Option<String>,
    pub mar: Vec<MarDiagnostic>,
}

/// Per-variable missing rates, Little's test and MAR diagnostics against
/// `covariates`. A degenerate or numerically failing Little's test is
/// recorded as a note rather than aborting the report.
pub fn missingness_report(d: &Dataset, covariates: &[&str]) -> Result<MissingnessReport> {
    let n = d.n_rows();
    let variables: Vec<VariableMissingness> = d
        .schema()
        .variables()
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let missing = d.missing_count(j);
            VariableMissingness {
                code: v.code.clone(),
                missing,
                rate: if n == 0 {
                    0.0
                } else {
                    missing as f64 / n as f64
                },
            }
        })
        .collect();
    let (little, little_note) = match little_mcar_test(d) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let mar = mar_diagnostic(d, covariates)?;
    Ok(MissingnessReport {
        n_rows: n,
        average_rate: average_missing_rate(d),
        variables,
        little,
        little_note,
        mar,
    })
}

/// Missing cells divided by total cells.
pub fn average_missing_rate(d: &Dataset) -> f64 {
    let cells = d.n_rows() * d.n_vars();
    if cells == 0 {
        return 0.0;
    }
    d.total_missing() as f64 / cells as f64
}

/// Number of imputations for an average missing rate: the percentage of
/// missingness rounded up to a multiple of ten, and never fewer than five.
pub fn choose_num_imputations(avg_missing_rate: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&avg_missing_rate) {
        return Err(Error::Domain(format!(
            "missing rate {avg_missing_rate} is outside [0, 1]"
        )));
    }
    // 1e-9 absorbs representation error such as 100 × 0.3 / 10 = 3.0000000000000004
    let tens = (100.0 * avg_missing_rate / 10.0 - 1e-9).ceil().max(0.0) as usize;
    Ok((tens * 10).max(5))
}

/// An estimate combined across imputations by Rubin's rules.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledEstimate {
    pub estimate: f64,
    /// W̄, the mean within-imputation variance.
    pub within_var: f64,
    /// B, the between-imputation variance of the point estimates.
    pub between_var: f64,
    /// T = W̄ + (1 + 1/m)·B.
    pub total_var: f64,
    pub m: usize,
    /// Reference degrees of freedom; infinite when B = 0 and the complete-data
    /// degrees of freedom are unknown.
    pub df: f64,
}

impl PooledEstimate {
    pub fn std_error(&self) -> f64 {
        self.total_var.sqrt()
    }

    pub fn t_stat(&self) -> f64 {
        self.estimate / self.std_error()
    }

    pub fn p_value(&self) -> f64 {
        if self.total_var == 0.0 {
            return if self.estimate == 0.0 { 1.0 } else { 0.0 };
        }
        t_two_sided_p(self.t_stat(), self.df)
    }

    /// Two-sided interval at confidence `level`.
    pub fn interval(&self, level: f64) -> (f64, f64) {
        let q = t_quantile(0.5 + level / 2.0, self.df);
        let h = q * self.std_error();
        (self.estimate - h, self.estimate + h)
    }

    /// Fraction of the total variance due to missing data.
    pub fn missing_information(&self) -> f64 {
        if self.total_var == 0.0 {
            return 0.0;
        }
        (1.0 + 1.0 / self.m as f64) * self.between_var / self.total_var
    }
}

/// Combines `(estimate, variance)` pairs from `m` imputations.
pub fn pool_rubin(estimates: &[(f64, f64)]) -> Result<PooledEstimate> {
    pool_rubin_with_df(estimates, None)
}

/// As [`pool_rubin`], with the small-sample degrees of freedom of Barnard and
/// Rubin when the complete-data degrees of freedom are known.
pub fn pool_rubin_with_df(
    estimates: &[(f64, f64)],
    complete_df: Option<f64>,
) -> Result<PooledEstimate> {
    let m = estimates.len();
    if m == 0 {
        return Err(Error::Domain(
            "cannot pool an empty list of estimates".into(),
        ));
    }
    if let Some((_, v)) = estimates
        .iter()
        .find(|(q, v)| !(*v >= 0.0) || !q.is_finite() || !v.is_finite())
    {
        return Err(Error::Domain(format!(
            "invalid variance {v} in pooled estimates"
        )));
    }
    let mf = m as f64;
    let estimate = estimates.iter().map(|e| e.0).sum::<f64>() / mf;
    let within_var = estimates.iter().map(|e| e.1).sum::<f64>() / mf;
    let between_var = if m > 1 {
        estimates
            .iter()
            .map(|e| (e.0 - estimate) * (e.0 - estimate))
            .sum::<f64>()
            / (mf - 1.0)
    } else {
        0.0
    };
    let total_var = within_var + (1.0 + 1.0 / mf) * between_var;

    let adj = (1.0 + 1.0 / mf) * between_var;
    let df_rubin = if adj > 0.0 && m > 1 {
        let r = adj / within_var;
        (mf - 1.0) * (1.0 + 1.0 / r) * (1.0 + 1.0 / r)
    } else {
        f64::INFINITY
    };
    let df = match complete_df {
        Some(com) if com > 0.0 => {
            let gamma = if total_var > 0.0 {
                adj / total_var
            } else {
                0.0
            };
            let obs = (com + 1.0) / (com + 3.0) * com * (1.0 - gamma);
            1.0 / (1.0 / df_rubin + 1.0 / obs)
        }
        _ => df_rubin,
    };
    Ok(PooledEstimate {
        estimate,
        within_var,
        between_var,
        total_var,
        m,
        df,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn imputation_count_rule() {
        assert_eq!(choose_num_imputations(0.5617).unwrap(), 60);
        assert_eq!(choose_num_imputations(0.0).unwrap(), 5);
        assert_eq!(choose_num_imputations(0.23).unwrap(), 30);
        assert_eq!(choose_num_imputations(0.3).unwrap(), 30);
        assert_eq!(choose_num_imputations(0.04).unwrap(), 10);
        assert_eq!(choose_num_imputations(1.0).unwrap(), 100);
        assert!(matches!(choose_num_imputations(1.2), Err(Error::Domain(_))));
        assert!(matches!(
            choose_num_imputations(-0.1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn pooling_hand_values() {
        let p = pool_rubin(&[(3.0, 0.4)]).unwrap();
        assert_eq!((p.estimate, p.between_var, p.total_var), (3.0, 0.0, 0.4));
        let p = pool_rubin(&[(1.0, 0.5), (3.0, 0.5)]).unwrap();
        assert_eq!(
            (p.estimate, p.within_var, p.between_var, p.total_var),
            (2.0, 0.5, 2.0, 3.5)
        );
        let p = pool_rubin(&[(1.5, 0.2); 4]).unwrap();
        assert_eq!(p.between_var, 0.0);
        assert_eq!(p.total_var, p.within_var);
        assert!(matches!(pool_rubin(&[]), Err(Error::Domain(_))));
        assert!(pool_rubin(&[(1.0, -0.1)]).is_err());
    }

    #[test]
    fn barnard_rubin_df_never_exceeds_complete_df() {
        let est = vec![(1.0, 0.2), (1.3, 0.25), (0.8, 0.22), (1.1, 0.2)];
        let big = pool_rubin(&est).unwrap();
        let small = pool_rubin_with_df(&est, Some(20.0)).unwrap();
        assert!(small.df < 20.0);
        assert!(small.df < big.df);
        let (lo, hi) = small.interval(0.95);
        assert!(lo < small.estimate && small.estimate < hi);
    }

    proptest! {
        #[test]
        fn total_variance_identity(v in proptest::collection::vec((-10.0..10.0f64, 0.0..5.0f64), 1..30)) {
            let p = pool_rubin(&v).unwrap();
            let m = v.len() as f64;
            prop_assert!((p.total_var - (p.within_var + (1.0 + 1.0 / m) * p.between_var)).abs() <= 1e-12 * (1.0 + p.total_var));
            prop_assert!(p.between_var >= 0.0);
        }
    }
}
