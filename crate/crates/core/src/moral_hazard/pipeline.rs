//! Missingness report, imputation, factor scores and the two stages, pooled
//! across imputations.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{bootstrap_delta, stage1_fit, stage2_fit, wage_equation, MoralHazardResult};
use crate::dataset::{
    encode_with, policy_key_index, policy_rows, Dataset, EncodeOptions, Policy, Role, VariableKind,
};
use crate::error::{Error, Result};
use crate::factor::{
    fit_rotate_score, loadings_report, select_p_with, Criterion, FactorModel, FactorProblem,
    FactorScores, FitOptions, LoadingsTable, SelectionTable,
};
use crate::imputation::{
    choose_num_imputations, mice_impute_with, missingness_report, pool_rubin_with_df,
    ImputationSet, MiceOptions, MissingnessReport, PooledEstimate,
};
use crate::regression::RegressionFit;
use crate::rng::child_seed;
use crate::runner::{Runner, Sequential};
use crate::special::f_sf;

/// How per-imputation estimates become one table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Pooling {
    /// Rubin's rules over all imputations.
    Rubin,
    /// The first completed dataset only.
    Single,
}

impl Pooling {
    pub fn name(self) -> &'static str {
        match self {
            Pooling::Rubin => "rubin",
            Pooling::Single => "single",
        }
    }

    pub fn parse(s: &str) -> Option<Pooling> {
        match s {
            "rubin" => Some(Pooling::Rubin),
            "single" => Some(Pooling::Single),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Imputation count; chosen from the average missing rate when absent.
    pub m: Option<usize>,
    pub iterations: usize,
    pub criterion: Criterion,
    /// Skip selection and use this many factors.
    pub fixed_p: Option<usize>,
    pub subsamples: Vec<Policy>,
    pub pooling: Pooling,
    /// Pairs-bootstrap replicates for δ; `None` keeps OLS standard errors.
    pub bootstrap: Option<usize>,
    pub alpha: f64,
    pub firm_value: String,
    /// Wage column; the variable with role `wage` when absent.
    pub wage: Option<String>,
    /// Impute within policy groups so group-specific relations survive.
    pub stratify: bool,
    pub display_cutoff: f64,
    /// Covariates of the MAR diagnostics; demographic variables when absent.
    pub mar_covariates: Option<Vec<String>>,
    pub fit: FitOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            m: None,
            iterations: 20,
            criterion: Criterion::Bic,
            fixed_p: None,
            subsamples: vec![Policy::All, Policy::OnSite, Policy::FullyRemote],
            pooling: Pooling::Rubin,
            bootstrap: None,
            alpha: 0.05,
            firm_value: "workteam_npeople".to_string(),
            wage: None,
            stratify: true,
            display_cutoff: 0.1,
            mar_covariates: None,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledCoefficient {
    pub name: String,
    pub estimate: PooledEstimate,
}

/// A regression combined across imputations. Coefficients follow Rubin's
/// rules; fit statistics are averages over imputations.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledRegression {
    pub coefficients: Vec<PooledCoefficient>,
    pub n: usize,
    pub df_residual: usize,
    pub residual_std_error: f64,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    pub f_statistic: Option<(f64, usize, usize)>,
    pub f_p_value: Option<f64>,
    pub m: usize,
}

impl PooledRegression {
    pub fn get(&self, name: &str) -> Option<&PooledEstimate> {
        self.coefficients
            .iter()
            .find(|c| c.name == name)
            .map(|c| &c.estimate)
    }

    /// Pools fits of the same model. A coefficient absent from some fits (a
    /// design column dropped in one imputation) is pooled over the others.
    pub fn pool(fits: &[&RegressionFit]) -> Result<PooledRegression> {
        let first = fits
            .first()
            .ok_or_else(|| Error::Domain("no fits to pool".into()))?;
        let mut names: Vec<String> = first.names.clone();
        for f in &fits[1..] {
            for n in &f.names {
                if !names.contains(n) {
                    names.push(n.clone());
                }
            }
        }
        let coefficients = names
            .into_iter()
            .map(|name| {
                let mut est = Vec::new();
                let mut df = f64::INFINITY;
                for f in fits {
                    if let Some(j) = f.index_of(&name) {
                        est.push((f.coefficients[j], f.std_errors[j] * f.std_errors[j]));
                        df = df.min(f.df_residual as f64);
                    }
                }
                Ok(PooledCoefficient {
                    estimate: pool_rubin_with_df(&est, Some(df))?,
                    name,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = fits.len();
        let avg =
            |g: &dyn Fn(&RegressionFit) -> f64| fits.iter().map(|f| g(f)).sum::<f64>() / m as f64;
        let f_statistic = first.f_statistic.map(|(_, d1, d2)| {
            let mean_f = avg(&|f| f.f_statistic.map_or(f64::NAN, |s| s.0));
            (mean_f, d1, d2)
        });
        Ok(PooledRegression {
            coefficients,
            n: first.n,
            df_residual: first.df_residual,
            residual_std_error: avg(&|f| f.residual_std_error),
            r_squared: avg(&|f| f.r_squared),
            adjusted_r_squared: avg(&|f| f.adjusted_r_squared),
            f_p_value: f_statistic.map(|(f, d1, d2)| f_sf(f, d1 as f64, d2 as f64)),
            f_statistic,
            m,
        })
    }
}

/// Pooled δ for one subsample and productivity factor.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledDelta {
    pub subsample: Policy,
    pub productivity: String,
    pub delta: PooledEstimate,
    /// At level `1 − alpha`.
    pub interval: (f64, f64),
    pub significant: bool,
    pub n: usize,
    /// Mean bootstrap standard error over imputations, when bootstrapped.
    pub bootstrap_se: Option<f64>,
    pub regression: PooledRegression,
}

/// δ̂ from one imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRecord {
    pub imputation: usize,
    pub subsample: Policy,
    pub productivity: String,
    pub delta: f64,
    pub std_error: f64,
    pub p_value: f64,
    pub n: usize,
    pub bootstrap_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorSummary {
    pub labels: Vec<String>,
    pub ss_loadings: Vec<f64>,
    pub proportion_var: Vec<f64>,
    pub cumulative_var: Vec<f64>,
}

impl From<&FactorScores> for FactorSummary {
    fn from(s: &FactorScores) -> Self {
        FactorSummary {
            labels: s.labels.clone(),
            ss_loadings: s.ss_loadings.clone(),
            proportion_var: s.proportion_var.clone(),
            cumulative_var: s.cumulative_var.clone(),
        }
    }
}

/// Everything the report tables are built from. Factor tables describe the
/// first imputation; regressions are pooled as configured.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub n_rows: usize,
    pub m: usize,
    /// Imputations entering the pooled tables.
    pub m_used: usize,
    pub iterations: usize,
    pub seed: u64,
    pub pooling: Pooling,
    pub strata: Option<String>,
    pub alpha: f64,
    pub missingness: MissingnessReport,
    pub selection: SelectionTable,
    pub p: usize,
    pub factor_model: FactorModel,
    pub factors: FactorSummary,
    pub loadings: LoadingsTable,
    pub wage_code: String,
    pub wage: PooledRegression,
    pub firm_value_code: String,
    pub stage1: Vec<(Policy, PooledRegression)>,
    pub stage2: Vec<PooledDelta>,
    pub deltas: Vec<DeltaRecord>,
    pub warnings: Vec<String>,
}

impl PipelineReport {
    pub fn delta(&self, subsample: Policy, productivity: &str) -> Option<&PooledDelta> {
        self.stage2
            .iter()
            .find(|d| d.subsample == subsample && d.productivity == productivity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub report: PipelineReport,
    pub imputations: ImputationSet,
}

struct SubsampleOutcome {
    stage1: RegressionFit,
    results: Vec<MoralHazardResult>,
    dropped: Vec<String>,
}

struct ImputationOutcome {
    model: FactorModel,
    scores: FactorScores,
    wage: RegressionFit,
    subsamples: Vec<SubsampleOutcome>,
}

pub fn run_pipeline(d: &Dataset, cfg: &PipelineConfig) -> Result<PipelineRun> {
    run_pipeline_with(d, cfg, &Sequential)
}

/// Runs the full analysis; imputation chains and per-imputation analyses go
/// through `runner`. Output depends only on the data and `cfg`.
pub fn run_pipeline_with<R: Runner>(
    d: &Dataset,
    cfg: &PipelineConfig,
    runner: &R,
) -> Result<PipelineRun> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {}",
            cfg.alpha
        )));
    }
    if cfg.subsamples.is_empty() {
        return Err(Error::Config("no subsamples requested".into()));
    }
    if !(cfg.display_cutoff >= 0.0) {
        return Err(Error::Config("display cutoff must be nonnegative".into()));
    }
    let schema = d.schema();
    let key = policy_key_index(schema)?;
    let key_code = schema.variables()[key].code.clone();
    let firm_idx = schema.require(&cfg.firm_value).map_err(|_| {
        Error::Schema(format!(
            "firm-value proxy `{}` not in schema",
            cfg.firm_value
        ))
    })?;
    if schema.variables()[firm_idx].kind != VariableKind::Continuous {
        return Err(Error::Schema(format!(
            "firm-value proxy `{}` must be continuous",
            cfg.firm_value
        )));
    }
    let wage_code = match &cfg.wage {
        Some(w) => {
            schema.require(w)?;
            w.clone()
        }
        None => schema
            .codes_with_role(Role::Wage)
            .first()
            .map(|s| s.to_string())
            .ok_or_else(|| Error::Schema("no wage column (role `wage`) in schema".into()))?,
    };
    let components: Vec<String> = schema
        .codes_with_role(Role::ProductivityComponent)
        .iter()
        .map(|s| s.to_string())
        .collect();
    if components.is_empty() {
        return Err(Error::Schema(
            "no productivity components (role `productivity_component`) in schema".into(),
        ));
    }
    let regressors: Vec<String> = schema
        .variables()
        .iter()
        .filter(|v| v.role.is_regressor() && v.code != cfg.firm_value && v.code != wage_code)
        .map(|v| v.code.clone())
        .collect();
    if regressors.is_empty() {
        return Err(Error::Schema(
            "no explanatory variables (wfh_related, demographic or control roles)".into(),
        ));
    }
    let mut warnings = Vec::new();

    let covariates: Vec<String> = match &cfg.mar_covariates {
        Some(c) => c.clone(),
        None => schema
            .codes_with_role(Role::Demographic)
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let cov_refs: Vec<&str> = covariates.iter().map(|s| s.as_str()).collect();
    let missingness =
        missingness_report(d, &cov_refs).map_err(|e| e.in_stage("missingness report"))?;
    if let Some(note) = &missingness.little_note {
        warnings.push(format!("Little's test not computed: {note}"));
    }
    let m = match cfg.m {
        Some(0) => return Err(Error::Config("m must be at least 1".into())),
        Some(m) => m,
        None => choose_num_imputations(missingness.average_rate)?,
    };

    let strata = if cfg.stratify && d.missing_count(key) == 0 {
        Some(key_code.clone())
    } else {
        if cfg.stratify {
            warnings.push(format!(
                "`{key_code}` has missing cells; imputing without policy strata"
            ));
        }
        None
    };
    let mut mice = MiceOptions::new(m, cfg.iterations, child_seed(cfg.seed, "mice", 0));
    mice.strata = strata.clone();
    let imputations = mice_impute_with(d, &mice, runner).map_err(|e| e.in_stage("imputation"))?;

    let codes: Vec<&str> = components.iter().map(|s| s.as_str()).collect();
    let first = FactorProblem::from_dataset(&imputations.completed[0], &codes)
        .map_err(|e| e.in_stage("factor analysis"))?;
    let (selection, _) = select_p_with(&first, cfg.criterion, &cfg.fit, runner)
        .map_err(|e| e.in_stage("factor selection"))?;
    let p = cfg.fixed_p.unwrap_or(selection.chosen);
    if p == 0 {
        return Err(Error::Selection(
            "zero factors selected; there are no productivity scores to analyse".into(),
        )
        .in_stage("factor selection"));
    }

    let used = match cfg.pooling {
        Pooling::Rubin => m,
        Pooling::Single => 1,
    };
    let regressor_opts = EncodeOptions {
        variables: Some(regressors.clone()),
        drop_empty_levels: true,
    };
    let outcomes: Vec<Result<ImputationOutcome>> = runner.map(used, |i| {
        let data = &imputations.completed[i];
        let stage = |what: &str| format!("imputation {}: {what}", i + 1);
        let problem = FactorProblem::from_dataset(data, &codes)
            .map_err(|e| e.in_stage(stage("factor analysis")))?;
        let (model, scores) = fit_rotate_score(&problem, p, &cfg.fit)
            .map_err(|e| e.in_stage(stage("factor analysis")))?;
        let wage = wage_equation(&data.numeric(&wage_code)?, &scores)
            .map_err(|e| e.in_stage(stage("wage equation")))?;
        let mut subsamples = Vec::with_capacity(cfg.subsamples.len());
        for (s_idx, &policy) in cfg.subsamples.iter().enumerate() {
            let label = |what: &str| stage(&format!("{} {what}", policy.name()));
            let rows = policy_rows(data, policy)?;
            let sub = data.select_rows(&rows, policy.name());
            let (x, dropped) = encode_with(&sub, &regressor_opts)
                .map_err(|e| e.in_stage(label("design")))?
                .drop_constant_columns();
            let firm = sub.numeric(&cfg.firm_value)?;
            let s1 = stage1_fit(&x, &firm).map_err(|e| e.in_stage(label("stage 1")))?;
            let outcomes: Vec<Vec<f64>> = scores
                .labels
                .iter()
                .map(|l| {
                    let col = scores.column(l).expect("own label");
                    rows.iter().map(|&r| col[r]).collect()
                })
                .collect();
            let boot = match cfg.bootstrap {
                Some(b) => {
                    let refs: Vec<&[f64]> = outcomes.iter().map(|v| v.as_slice()).collect();
                    let seed = child_seed(
                        cfg.seed,
                        "bootstrap",
                        (i * cfg.subsamples.len() + s_idx) as u64,
                    );
                    Some(
                        bootstrap_delta(&x, &firm, &refs, b, cfg.alpha, seed)
                            .map_err(|e| e.in_stage(label("bootstrap")))?,
                    )
                }
                None => None,
            };
            let mut results = Vec::with_capacity(outcomes.len());
            for (k, y) in outcomes.iter().enumerate() {
                let s2 =
                    stage2_fit(&x, &s1.residuals, y).map_err(|e| e.in_stage(label("stage 2")))?;
                let mut r = MoralHazardResult::from_fits(
                    policy,
                    &scores.labels[k],
                    s1.clone(),
                    s2,
                    cfg.alpha,
                )?;
                r.bootstrap = boot.as_ref().map(|b| b[k].clone());
                results.push(r);
            }
            subsamples.push(SubsampleOutcome {
                stage1: s1,
                results,
                dropped,
            });
        }
        Ok(ImputationOutcome {
            model,
            scores,
            wage,
            subsamples,
        })
    });
    let outcomes: Vec<ImputationOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let labels = outcomes[0].scores.labels.clone();
    for (i, o) in outcomes.iter().enumerate() {
        if o.scores.labels != labels {
            return Err(Error::Numerical(format!(
                "factor labels of imputation {} ([{}]) differ from imputation 1 ([{}])",
                i + 1,
                o.scores.labels.join(", "),
                labels.join(", ")
            ))
            .in_stage("label alignment"));
        }
    }
    let o1 = &outcomes[0];
    if !o1.model.converged {
        warnings.push(format!(
            "factor model (p = {p}) did not converge in {} iterations",
            o1.model.iterations
        ));
    }
    for (j, f) in o1.model.floored.iter().enumerate() {
        if *f {
            warnings.push(format!(
                "uniqueness of `{}` held at the Heywood floor",
                o1.model.codes[j]
            ));
        }
    }
    for (s_idx, policy) in cfg.subsamples.iter().enumerate() {
        let mut dropped: Vec<&String> = outcomes
            .iter()
            .flat_map(|o| &o.subsamples[s_idx].dropped)
            .collect();
        dropped.sort();
        dropped.dedup();
        if !dropped.is_empty() {
            let names: Vec<&str> = dropped.iter().map(|s| s.as_str()).collect();
            warnings.push(format!(
                "{}: constant design columns dropped: {}",
                policy.name(),
                names.join(", ")
            ));
        }
    }

    let wage_fits: Vec<&RegressionFit> = outcomes.iter().map(|o| &o.wage).collect();
    let wage = PooledRegression::pool(&wage_fits)?;
    let mut stage1 = Vec::new();
    let mut stage2 = Vec::new();
    let mut deltas = Vec::new();
    for (s_idx, &policy) in cfg.subsamples.iter().enumerate() {
        let fits: Vec<&RegressionFit> = outcomes
            .iter()
            .map(|o| &o.subsamples[s_idx].stage1)
            .collect();
        stage1.push((policy, PooledRegression::pool(&fits)?));
        for (k, label) in labels.iter().enumerate() {
            let results: Vec<&MoralHazardResult> = outcomes
                .iter()
                .map(|o| &o.subsamples[s_idx].results[k])
                .collect();
            for (i, r) in results.iter().enumerate() {
                deltas.push(DeltaRecord {
                    imputation: i + 1,
                    subsample: policy,
                    productivity: label.clone(),
                    delta: r.delta_hat,
                    std_error: r.delta_se,
                    p_value: r.delta_p,
                    n: r.n,
                    bootstrap_se: r.bootstrap.as_ref().map(|b| b.std_error),
                });
            }
            let est: Vec<(f64, f64)> = results
                .iter()
                .map(|r| {
                    let se = r.bootstrap.as_ref().map_or(r.delta_se, |b| b.std_error);
                    (r.delta_hat, se * se)
                })
                .collect();
            let df = results
                .iter()
                .map(|r| r.stage2.df_residual)
                .min()
                .unwrap_or(0) as f64;
            let delta = pool_rubin_with_df(&est, Some(df))?;
            let fits: Vec<&RegressionFit> = results.iter().map(|r| &r.stage2).collect();
            let mut regression = PooledRegression::pool(&fits)?;
            if cfg.bootstrap.is_some() {
                if let Some(c) = regression
                    .coefficients
                    .iter_mut()
                    .find(|c| c.name == super::RESIDUAL_COLUMN)
                {
                    c.estimate = delta.clone();
                }
            }
            let bootstrap_se = cfg.bootstrap.map(|_| {
                results
                    .iter()
                    .filter_map(|r| r.bootstrap.as_ref())
                    .map(|b| b.std_error)
                    .sum::<f64>()
                    / results.len() as f64
            });
            stage2.push(PooledDelta {
                subsample: policy,
                productivity: label.clone(),
                interval: delta.interval(1.0 - cfg.alpha),
                significant: delta.p_value() < cfg.alpha,
                n: results[0].n,
                bootstrap_se,
                delta,
                regression,
            });
        }
    }

    let factors = FactorSummary::from(&o1.scores);
    let loadings = loadings_report(&o1.model, cfg.display_cutoff);
    let factor_model = o1.model.clone();
    let report = PipelineReport {
        n_rows: d.n_rows(),
        m,
        m_used: used,
        iterations: cfg.iterations,
        seed: cfg.seed,
        pooling: cfg.pooling,
        strata,
        alpha: cfg.alpha,
        missingness,
        selection,
        p,
        factor_model,
        factors,
        loadings,
        wage_code,
        wage,
        firm_value_code: cfg.firm_value.clone(),
        stage1,
        stage2,
        deltas,
        warnings,
    };
    Ok(PipelineRun {
        report,
        imputations,
    })
}
