//! Two-stage residual-inclusion estimate of ex-post moral hazard.
//!
//! Stage 1 regresses firm value on the explanatory variables; its residuals
//! ε̂ estimate the unexpected firm-value shock. Stage 2 regresses a
//! productivity score on the same variables plus ε̂. With `(ε, v)` bivariate
//! normal, `E(v | ε) = δε` and the ε̂ coefficient estimates δ = σ_vε / σ_ε².

mod pipeline;

pub use pipeline::{
    run_pipeline, run_pipeline_with, DeltaRecord, FactorSummary, PipelineConfig, PipelineReport,
    PipelineRun, PooledCoefficient, PooledDelta, PooledRegression, Pooling,
};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_traits::Float;
use rand::Rng;

use crate::dataset::{DesignMatrix, Policy, INTERCEPT};
use crate::error::{Error, Result};
use crate::factor::FactorScores;
use crate::regression::{fit_matrix, fit_ols, RegressionFit};
use crate::rng::substream;
use crate::special::t_quantile;

/// Name of the stage-1 residual column in stage-2 designs.
pub const RESIDUAL_COLUMN: &str = "first_stage_residual";

/// Default number of pairs-bootstrap resamples.
pub const DEFAULT_BOOTSTRAP: usize = 500;

/// Covariance of the firm-value shock ε and the productivity disturbance v,
/// with the implied regression of v on ε: `v = δε + ξ`, `ξ ⟂ ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ShockDecomposition {
    sigma_v2: f64,
    sigma_eps2: f64,
    sigma_veps: f64,
}

impl ShockDecomposition {
    /// Fails unless the covariance matrix is positive semidefinite with σ_ε² > 0.
    pub fn new(sigma_v2: f64, sigma_eps2: f64, sigma_veps: f64) -> Result<Self> {
        if !(sigma_eps2 > 0.0) || !sigma_eps2.is_finite() {
            return Err(Error::Domain(format!(
                "σ_ε² must be positive, got {sigma_eps2}"
            )));
        }
        if !(sigma_v2 >= 0.0) || !sigma_v2.is_finite() || !sigma_veps.is_finite() {
            return Err(Error::Domain(format!(
                "invalid shock variances (σ_v² = {sigma_v2}, σ_vε = {sigma_veps})"
            )));
        }
        if sigma_veps * sigma_veps > sigma_v2 * sigma_eps2 {
            return Err(Error::Domain(format!(
                "shock covariance is not positive semidefinite: σ_vε² = {} > σ_v²σ_ε² = {}",
                sigma_veps * sigma_veps,
                sigma_v2 * sigma_eps2
            )));
        }
        Ok(ShockDecomposition {
            sigma_v2,
            sigma_eps2,
            sigma_veps,
        })
    }

    /// From δ, σ_ε² and the conditional variance σ_ξ².
    pub fn from_delta(delta: f64, sigma_eps2: f64, sigma_xi2: f64) -> Result<Self> {
        if !(sigma_xi2 >= 0.0) {
            return Err(Error::Domain(format!(
                "σ_ξ² must be nonnegative, got {sigma_xi2}"
            )));
        }
        let sigma_veps = delta * sigma_eps2;
        ShockDecomposition::new(sigma_xi2 + delta * sigma_veps, sigma_eps2, sigma_veps)
    }

    pub fn sigma_v2(&self) -> f64 {
        self.sigma_v2
    }

    pub fn sigma_eps2(&self) -> f64 {
        self.sigma_eps2
    }

    pub fn sigma_veps(&self) -> f64 {
        self.sigma_veps
    }

    /// δ = σ_vε / σ_ε².
    pub fn delta(&self) -> f64 {
        self.sigma_veps / self.sigma_eps2
    }

    /// σ_ξ² = σ_v² − σ_vε² / σ_ε², clamped at 0 against rounding.
    pub fn sigma_xi2(&self) -> f64 {
        (self.sigma_v2 - self.sigma_veps * self.sigma_veps / self.sigma_eps2).max(0.0)
    }
}

/// Firm-value equation `Y = Xθ + ε`.
pub fn stage1_fit(x: &DesignMatrix, firm_value: &[f64]) -> Result<RegressionFit> {
    fit_ols(x, firm_value)
}

/// Productivity equation `P = Xρ + δε̂ + ξ`; the last coefficient is δ̂.
pub fn stage2_fit(
    x: &DesignMatrix,
    eps_hat: &[f64],
    productivity: &[f64],
) -> Result<RegressionFit> {
    if eps_hat.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            what: "stage-1 residuals".into(),
            expected: x.nrows(),
            got: eps_hat.len(),
        });
    }
    fit_ols(&x.with_column(RESIDUAL_COLUMN, eps_hat)?, productivity)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDelta {
    pub replicates: usize,
    /// Replicates whose resampled design had full rank.
    pub used: usize,
    pub std_error: f64,
    /// Percentile interval at the result's confidence level.
    pub interval: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoralHazardResult {
    pub subsample: Policy,
    pub productivity: String,
    pub stage1: RegressionFit,
    pub stage2: RegressionFit,
    pub delta_hat: f64,
    pub delta_se: f64,
    pub delta_p: f64,
    pub alpha: f64,
    pub significant: bool,
    pub n: usize,
    pub bootstrap: Option<BootstrapDelta>,
}

impl MoralHazardResult {
    /// Collects δ̂ and its inference from fitted stages.
    pub fn from_fits(
        subsample: Policy,
        productivity: &str,
        stage1: RegressionFit,
        stage2: RegressionFit,
        alpha: f64,
    ) -> Result<Self> {
        let j = stage2.index_of(RESIDUAL_COLUMN).ok_or_else(|| {
            Error::Schema(format!("stage-2 fit has no `{RESIDUAL_COLUMN}` column"))
        })?;
        let delta_p = stage2.p_values[j];
        Ok(MoralHazardResult {
            subsample,
            productivity: productivity.to_string(),
            delta_hat: stage2.coefficients[j],
            delta_se: stage2.std_errors[j],
            delta_p,
            alpha,
            significant: delta_p < alpha,
            n: stage2.n,
            stage1,
            stage2,
            bootstrap: None,
        })
    }

    /// Confidence interval for δ at level `1 − alpha` from the stage-2 t law.
    pub fn interval(&self) -> (f64, f64) {
        let q = t_quantile(1.0 - self.alpha / 2.0, self.stage2.df_residual as f64);
        (
            self.delta_hat - q * self.delta_se,
            self.delta_hat + q * self.delta_se,
        )
    }
}

/// Runs both stages for one productivity outcome.
pub fn estimate_delta(
    x: &DesignMatrix,
    firm_value: &[f64],
    productivity: &[f64],
    subsample: Policy,
    label: &str,
    alpha: f64,
) -> Result<MoralHazardResult> {
    let s1 = stage1_fit(x, firm_value).map_err(|e| e.in_stage("stage 1"))?;
    let s2 = stage2_fit(x, &s1.residuals, productivity).map_err(|e| e.in_stage("stage 2"))?;
    MoralHazardResult::from_fits(subsample, label, s1, s2, alpha)
}

/// Pairs bootstrap of δ̂: rows are resampled with replacement and both stages
/// are re-fitted, so the estimated regressor is re-generated each time.
/// Replicates with a rank-deficient design are skipped. Returns one summary
/// per productivity column.
pub fn bootstrap_delta(
    x: &DesignMatrix,
    firm_value: &[f64],
    productivity: &[&[f64]],
    replicates: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<BootstrapDelta>> {
    let n = x.nrows();
    if replicates < 2 {
        return Err(Error::Config(
            "the bootstrap needs at least 2 replicates".into(),
        ));
    }
    if firm_value.len() != n || productivity.iter().any(|p| p.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "bootstrap columns".into(),
            expected: n,
            got: firm_value.len(),
        });
    }
    let names: Vec<String> = x
        .names()
        .iter()
        .cloned()
        .chain([RESIDUAL_COLUMN.to_string()])
        .collect();
    let k = x.ncols();
    let mut draws: Vec<Vec<f64>> = productivity
        .iter()
        .map(|_| Vec::with_capacity(replicates))
        .collect();
    for r in 0..replicates {
        let mut rng = substream(seed, "bootstrap", r as u64);
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let xs = DMatrix::from_fn(n, k, |i, j| x.matrix()[(rows[i], j)]);
        let y: Vec<f64> = rows.iter().map(|&i| firm_value[i]).collect();
        let s1 = match fit_matrix(x.names(), &xs, &y, x.has_intercept()) {
            Ok(f) => f,
            Err(Error::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        };
        let x2 = xs.clone().insert_column(k, 0.0);
        let mut x2 = x2;
        for (i, e) in s1.residuals.iter().enumerate() {
            x2[(i, k)] = *e;
        }
        let mut fits = Vec::with_capacity(productivity.len());
        for p in productivity {
            let py: Vec<f64> = rows.iter().map(|&i| p[i]).collect();
            match fit_matrix(&names, &x2, &py, x.has_intercept()) {
                Ok(f) => fits.push(f.coefficients[k]),
                Err(Error::RankDeficient { .. }) => break,
                Err(e) => return Err(e),
            }
        }
        if fits.len() == productivity.len() {
            for (d, v) in draws.iter_mut().zip(fits) {
                d.push(v);
            }
        }
    }
    draws
        .into_iter()
        .map(|mut d| {
            if d.len() < 2 {
                return Err(Error::Numerical(
                    "fewer than 2 bootstrap replicates had a full-rank design".into(),
                ));
            }
            let sd = crate::linalg::sample_variance(&d).sqrt();
            d.sort_by(f64::total_cmp);
            Ok(BootstrapDelta {
                replicates,
                used: d.len(),
                std_error: sd,
                interval: (quantile(&d, alpha / 2.0), quantile(&d, 1.0 - alpha / 2.0)),
            })
        })
        .collect()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Wage on an intercept and every factor score, columns named by factor label.
pub fn wage_equation(wage: &[f64], scores: &FactorScores) -> Result<RegressionFit> {
    let n = scores.scores.nrows();
    if wage.len() != n {
        return Err(Error::DimensionMismatch {
            what: "wage column".into(),
            expected: n,
            got: wage.len(),
        });
    }
    let p = scores.scores.ncols();
    let mut names = alloc::vec![INTERCEPT.to_string()];
    names.extend(scores.labels.iter().cloned());
    let m = DMatrix::from_fn(n, p + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            scores.scores[(i, j - 1)]
        }
    });
    fit_ols(&DesignMatrix::new(names, m, true)?, wage)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticCheck {
    pub truth: f64,
    pub delta_hat: f64,
    pub std_error: f64,
    pub p_value: f64,
    /// Whether the truth lies in the 95% interval.
    pub covered: bool,
}

/// Draws hazard data with the given shock law, runs both stages and checks δ̂
/// against δ = σ_vε / σ_ε².
pub fn estimate_delta_synthetic_check(
    truth: &ShockDecomposition,
    n: usize,
    seed: u64,
) -> Result<SyntheticCheck> {
    use crate::synthetic::{gen_hazard_data, HazardConfig, FIRM_VALUE_CODE, PRODUCTIVITY_CODE};
    let cfg = HazardConfig::single(*truth, n, seed);
    let d = gen_hazard_data(&cfg)?;
    let codes: Vec<String> = (1..cfg.theta.len()).map(|c| format!("x{c}")).collect();
    let x = crate::dataset::encode_with(
        &d,
        &crate::dataset::EncodeOptions {
            variables: Some(codes),
            drop_empty_levels: false,
        },
    )?;
    let r = estimate_delta(
        &x,
        &d.numeric(FIRM_VALUE_CODE)?,
        &d.numeric(PRODUCTIVITY_CODE)?,
        Policy::OnSite,
        PRODUCTIVITY_CODE,
        0.05,
    )?;
    let (lo, hi) = r.interval();
    Ok(SyntheticCheck {
        truth: truth.delta(),
        delta_hat: r.delta_hat,
        std_error: r.delta_se,
        p_value: r.delta_p,
        covered: lo <= truth.delta() && truth.delta() <= hi,
    })
}
