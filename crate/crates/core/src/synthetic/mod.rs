//! Generators with known ground truth.
//!
//! Every column draws from its own named substream of the seed, so output is
//! identical regardless of generation order or threading.

mod fixture;

pub use fixture::{
    fixture_schema, gen_pipeline_data, FixtureConfig, FixtureGroup, FixtureTruth, SubsampleTruth,
};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{
    policy_key_index, Column, Dataset, Policy, Provenance, Role, Schema, VariableSpec,
};
use crate::error::{Error, Result};
use crate::moral_hazard::ShockDecomposition;
use crate::rng::{substream, StreamRng};
use crate::special::{logistic, logit};

/// Code of the generated firm-value column.
pub const FIRM_VALUE_CODE: &str = "workteam_npeople";
/// Code of the generated productivity column.
pub const PRODUCTIVITY_CODE: &str = "productivity";
/// Code of the generated policy-key column.
pub const POLICY_CODE: &str = "employer_arr_qual";

pub(crate) fn normals(seed: u64, name: &str, n: usize) -> Vec<f64> {
    let mut rng = substream(seed, name, 0);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub(crate) fn policy_spec() -> VariableSpec {
    VariableSpec::categorical(
        POLICY_CODE,
        Role::PolicyKey,
        &["Fully on-site", "Hybrid", "Fully remote"],
        "Fully on-site",
    )
}

/// Draws policy codes (0-based levels) with the given shares.
pub(crate) fn draw_policies(seed: u64, n: usize, shares: &[(Policy, f64)]) -> Result<Vec<u32>> {
    let total: f64 = shares.iter().map(|s| s.1).sum();
    if shares.is_empty()
        || shares.iter().any(|s| !(s.1 > 0.0) || s.0 == Policy::All)
        || !(total > 0.0)
    {
        return Err(Error::Config(
            "policy shares must be positive and name on_site, hybrid or fully_remote".into(),
        ));
    }
    let mut rng = substream(seed, POLICY_CODE, 0);
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (p, s) in shares {
                acc += s;
                if u < acc {
                    return p.code().expect("not All") - 1;
                }
            }
            shares[shares.len() - 1].0.code().expect("not All") - 1
        })
        .collect())
}

/// Loadings, uniquenesses and means of a factor model.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTruth {
    /// p×q loadings.
    pub beta: DMatrix<f64>,
    pub omega: Vec<f64>,
    /// Column means (intercept-only mean design).
    pub lambda: Vec<f64>,
}

impl FactorTruth {
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut s = self.beta.tr_mul(&self.beta);
        for (j, w) in self.omega.iter().enumerate() {
            s[(j, j)] += w;
        }
        s
    }

    fn validate(&self, q: usize) -> Result<()> {
        if self.beta.ncols() != q || self.omega.len() != q || self.lambda.len() != q {
            return Err(Error::Config(format!(
                "factor truth must describe {q} variables (β is {}×{}, {} uniquenesses, {} means)",
                self.beta.nrows(),
                self.beta.ncols(),
                self.omega.len(),
                self.lambda.len()
            )));
        }
        if self.omega.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("uniquenesses must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorConfig {
    pub n: usize,
    pub codes: Vec<String>,
    pub truth: FactorTruth,
    pub seed: u64,
}

/// `Y = 1λ' + Xβ + E` with `X ~ N(0, I_p)` and `E_j ~ N(0, ω_jj)`; returns
/// the data and the latent n×p factor matrix.
pub fn gen_factor_sample(cfg: &FactorConfig) -> Result<(Dataset, DMatrix<f64>)> {
    let q = cfg.codes.len();
    cfg.truth.validate(q)?;
    let p = cfg.truth.beta.nrows();
    let n = cfg.n;
    let latent_cols: Vec<Vec<f64>> = (0..p)
        .map(|k| normals(cfg.seed, &format!("factor{}", k + 1), n))
        .collect();
    let latent = DMatrix::from_fn(n, p, |i, k| latent_cols[k][i]);
    let mut columns = Vec::with_capacity(q);
    for (j, code) in cfg.codes.iter().enumerate() {
        let e = normals(cfg.seed, code, n);
        let sd = cfg.truth.omega[j].sqrt();
        let col: Vec<f64> = (0..n)
            .map(|i| {
                let common: f64 = (0..p)
                    .map(|k| latent[(i, k)] * cfg.truth.beta[(k, j)])
                    .sum();
                cfg.truth.lambda[j] + common + sd * e[i]
            })
            .collect();
        columns.push(Column::Numeric(col));
    }
    let schema = Schema::new(
        cfg.codes
            .iter()
            .map(|c| VariableSpec::continuous(c, Role::ProductivityComponent))
            .collect(),
    )?;
    let provenance = Provenance {
        source: Some(format!("synthetic factor data (seed {})", cfg.seed)),
        filters: Vec::new(),
    };
    let d = Dataset::new(schema, columns, vec![vec![false; n]; q], provenance)?;
    Ok((d, latent))
}

pub fn gen_factor_data(cfg: &FactorConfig) -> Result<Dataset> {
    gen_factor_sample(cfg).map(|(d, _)| d)
}

/// One policy group of the hazard generator.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyShock {
    pub policy: Policy,
    pub share: f64,
    pub shock: ShockDecomposition,
}

/// Covariates `x1..xk ~ N(0, 1)`, firm value `Y = Xθ + ε`, productivity
/// `P = Xρ + v`, with `(ε, v)` bivariate normal per policy group.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardConfig {
    pub n: usize,
    /// Intercept first, then one coefficient per covariate.
    pub theta: Vec<f64>,
    pub rho: Vec<f64>,
    pub groups: Vec<PolicyShock>,
    pub seed: u64,
}

impl HazardConfig {
    /// Three covariates, one on-site group with the given shock.
    pub fn single(shock: ShockDecomposition, n: usize, seed: u64) -> HazardConfig {
        HazardConfig {
            n,
            theta: vec![20.0, 2.0, -1.0, 0.5],
            rho: vec![0.0, 0.3, 0.2, -0.4],
            groups: vec![PolicyShock {
                policy: Policy::OnSite,
                share: 1.0,
                shock,
            }],
            seed,
        }
    }
}

/// Draws `(ε, v)` for each row: `ε = σ_ε z₁`, `v = δε + σ_ξ z₂`.
pub(crate) fn draw_shocks(
    seed: u64,
    groups: &[ShockDecomposition],
    group_of: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let n = group_of.len();
    let z1 = normals(seed, "eps", n);
    let z2 = normals(seed, "xi", n);
    let mut eps = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let s = &groups[group_of[i]];
        let e = s.sigma_eps2().sqrt() * z1[i];
        eps.push(e);
        v.push(s.delta() * e + s.sigma_xi2().sqrt() * z2[i]);
    }
    (eps, v)
}

/// Hazard data plus the drawn shocks `(ε, v)`.
pub fn gen_hazard_sample(cfg: &HazardConfig) -> Result<(Dataset, Vec<f64>, Vec<f64>)> {
    let k = cfg.theta.len().saturating_sub(1);
    if cfg.theta.is_empty() || cfg.rho.len() != cfg.theta.len() {
        return Err(Error::Config(
            "θ and ρ need an intercept and one entry per covariate".into(),
        ));
    }
    let n = cfg.n;
    let shares: Vec<(Policy, f64)> = cfg.groups.iter().map(|g| (g.policy, g.share)).collect();
    let levels = draw_policies(cfg.seed, n, &shares)?;
    let group_of: Vec<usize> = levels
        .iter()
        .map(|l| {
            cfg.groups
                .iter()
                .position(|g| g.policy.code() == Some(l + 1))
                .expect("drawn from groups")
        })
        .collect();
    let shocks: Vec<ShockDecomposition> = cfg.groups.iter().map(|g| g.shock).collect();
    let (eps, v) = draw_shocks(cfg.seed, &shocks, &group_of);

    let xs: Vec<Vec<f64>> = (0..k)
        .map(|c| normals(cfg.seed, &format!("x{}", c + 1), n))
        .collect();
    let linear =
        |coef: &[f64], i: usize| coef[0] + (0..k).map(|c| coef[c + 1] * xs[c][i]).sum::<f64>();
    let y: Vec<f64> = (0..n).map(|i| linear(&cfg.theta, i) + eps[i]).collect();
    let p: Vec<f64> = (0..n).map(|i| linear(&cfg.rho, i) + v[i]).collect();

    let mut specs: Vec<VariableSpec> = (0..k)
        .map(|c| VariableSpec::continuous(&format!("x{}", c + 1), Role::Control))
        .collect();
    specs.push(VariableSpec::continuous(FIRM_VALUE_CODE, Role::FirmValue));
    specs.push(VariableSpec::continuous(
        PRODUCTIVITY_CODE,
        Role::ProductivityComponent,
    ));
    specs.push(policy_spec());
    let mut columns: Vec<Column> = xs.into_iter().map(Column::Numeric).collect();
    columns.push(Column::Numeric(y));
    columns.push(Column::Numeric(p));
    columns.push(Column::Categorical(levels));
    let q = columns.len();
    let provenance = Provenance {
        source: Some(format!("synthetic hazard data (seed {})", cfg.seed)),
        filters: Vec::new(),
    };
    let d = Dataset::new(
        Schema::new(specs)?,
        columns,
        vec![vec![false; n]; q],
        provenance,
    )?;
    Ok((d, eps, v))
}

pub fn gen_hazard_data(cfg: &HazardConfig) -> Result<Dataset> {
    gen_hazard_sample(cfg).map(|(d, _, _)| d)
}

/// How cells go missing. Rates are the baseline masking probability; the
/// logistic slopes act on the standardized driver.
#[derive(Debug, Clone, PartialEq)]
pub enum Mechanism {
    Mcar {
        rate: f64,
    },
    /// Probability logistic in a fully observed driver column.
    Mar {
        driver: String,
        slope: f64,
        rate: f64,
    },
    /// Probability logistic in the cell's own value.
    Mnar {
        slope: f64,
        rate: f64,
    },
}

impl Mechanism {
    fn rate(&self) -> f64 {
        match self {
            Mechanism::Mcar { rate }
            | Mechanism::Mar { rate, .. }
            | Mechanism::Mnar { rate, .. } => *rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessSpec {
    pub mechanism: Mechanism,
    /// Columns subject to masking; empty means every column except the
    /// policy key and the MAR driver.
    pub targets: Vec<String>,
}

impl MissingnessSpec {
    pub fn mcar(rate: f64) -> MissingnessSpec {
        MissingnessSpec {
            mechanism: Mechanism::Mcar { rate },
            targets: Vec::new(),
        }
    }
}

fn standardized(values: &[f64]) -> Vec<f64> {
    let m = crate::linalg::mean(values);
    let sd = crate::linalg::sample_variance(values).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    values.iter().map(|v| (v - m) / sd).collect()
}

/// Masks cells of `d` according to `spec`. Cells that are already missing stay missing.
pub fn apply_missingness(d: &Dataset, spec: &MissingnessSpec, seed: u64) -> Result<Dataset> {
    let rate = spec.mechanism.rate();
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "missingness rate {rate} outside [0, 1)"
        )));
    }
    let schema = d.schema();
    let driver = match &spec.mechanism {
        Mechanism::Mar { driver, .. } => {
            let j = schema
                .require(driver)
                .map_err(|_| Error::Config(format!("MAR driver `{driver}` not in data")))?;
            if spec.targets.iter().any(|t| t == driver) {
                return Err(Error::Config(format!(
                    "MAR driver `{driver}` cannot itself be masked"
                )));
            }
            if d.missing_count(j) > 0 {
                return Err(Error::Config(format!(
                    "MAR driver `{driver}` must be fully observed"
                )));
            }
            Some(j)
        }
        _ => None,
    };
    let targets: Vec<usize> = if spec.targets.is_empty() {
        let key = policy_key_index(schema).ok();
        (0..schema.len())
            .filter(|&j| Some(j) != key && Some(j) != driver)
            .collect()
    } else {
        spec.targets
            .iter()
            .map(|t| {
                schema
                    .require(t)
                    .map_err(|_| Error::Config(format!("masking target `{t}` not in data")))
            })
            .collect::<Result<_>>()?
    };
    let n = d.n_rows();
    let column_values =
        |j: usize| -> Vec<f64> { (0..n).map(|i| d.value(i, j).unwrap_or(f64::NAN)).collect() };
    let driver_z = driver.map(|j| standardized(&column_values(j)));

    let mut out = d.clone();
    let (_, _, mask) = out.parts_mut();
    for &j in &targets {
        let mut rng: StreamRng =
            substream(seed, &format!("mask:{}", schema.variables()[j].code), 0);
        let probs: Vec<f64> = match &spec.mechanism {
            Mechanism::Mcar { rate } => vec![*rate; n],
            Mechanism::Mar { slope, rate, .. } => {
                let z = driver_z.as_ref().expect("driver resolved");
                z.iter()
                    .map(|z| logistic(logit(*rate) + slope * z))
                    .collect()
            }
            Mechanism::Mnar { slope, rate } => {
                let vals = column_values(j);
                let obs: Vec<f64> = vals.iter().copied().filter(|v| v.is_finite()).collect();
                let m = crate::linalg::mean(&obs);
                let sd = crate::linalg::sample_variance(&obs).sqrt();
                let sd = if sd > 0.0 { sd } else { 1.0 };
                vals.iter()
                    .map(|v| {
                        if v.is_finite() {
                            logistic(logit(*rate) + slope * (v - m) / sd)
                        } else {
                            1.0
                        }
                    })
                    .collect()
            }
        };
        for (i, p) in probs.iter().enumerate() {
            let u: f64 = rng.random();
            if u < *p {
                mask[j][i] = true;
            }
        }
    }
    let label = match &spec.mechanism {
        Mechanism::Mcar { rate } => format!("MCAR rate {rate}"),
        Mechanism::Mar {
            driver,
            slope,
            rate,
        } => format!("MAR on {driver}, slope {slope}, rate {rate}"),
        Mechanism::Mnar { slope, rate } => format!("MNAR slope {slope}, rate {rate}"),
    };
    Ok(out.with_note(&format!("masked ({label}, seed {seed})")))
}

/// Codes of the six productivity components, in schema order.
pub fn productivity_codes() -> Vec<String> {
    [
        "wfh_eff_COVID_quant",
        "wfh_expect_quant",
        "prom_eff_1day_quant",
        "prom_eff_5day_quant",
        "wfh_extraeff_comm_quant",
        "extratime_1stjob",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}
