//! Survey-shaped fixture for the whole pipeline.
//!
//! Two latent productivity factors `F = Xρ + v` drive the six productivity
//! components; firm value is `Xθ + ε`; and within each policy group
//! `v_k = δ_k ε + ξ_k`. The group-specific ξ covariance keeps
//! `Var(v) = σ_v² I` in every group, so the factors have identity covariance
//! overall and the loadings form a simple structure.
//!
//! Regression-predicted scores shrink each factor by `A_k = s_k / (1 + s_k)`
//! with `s_k = Σ_j β_kj² / ω_j`, so the δ that stage 2 recovers for score `k`
//! is `A_k δ_k`. For the unfiltered sample it is the share-weighted mean.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_traits::Float;
use rand::Rng;

use super::{
    apply_missingness, draw_policies, normals, policy_spec, productivity_codes, MissingnessSpec,
    POLICY_CODE,
};
use crate::dataset::{Column, Dataset, Policy, Provenance, Role, Schema, VariableSpec};
use crate::error::{Error, Result};
use crate::factor::{COMPETENCE, EFFICIENCY};
use crate::rng::substream;

const SIGMA_EPS: f64 = 10.0;
const SIGMA_V2: f64 = 0.5;
/// Loadings of (efficiency, competence) on the six components.
const LOADINGS: [[f64; 6]; 2] = [
    [0.90, 0.65, 0.0, 0.0, 0.72, 0.0],
    [0.0, 0.0, 0.85, 0.78, 0.0, 0.35],
];
const ITEM_MEANS: [f64; 6] = [10.4, 10.8, -4.5, -10.7, 39.2, 32.1];
const ITEM_SCALES: [f64; 6] = [17.5, 12.5, 32.6, 34.4, 42.8, 28.9];

/// Schema of the fixture, a subset of the survey variables.
pub fn fixture_schema() -> Schema {
    let codes = productivity_codes();
    let mut specs = vec![
        policy_spec(),
        VariableSpec::continuous("workteam_npeople", Role::FirmValue).with_units("people"),
    ];
    specs.extend(
        codes.iter().map(|c| {
            VariableSpec::continuous(c, Role::ProductivityComponent).with_units("percent")
        }),
    );
    specs.extend([
        VariableSpec::continuous("wfh_hours_invest", Role::WfhRelated).with_units("hours"),
        VariableSpec::continuous("internet_quality_quant", Role::WfhRelated),
        VariableSpec::binary("wfh_ownroom_notbed", Role::WfhRelated),
        VariableSpec::categorical("gender", Role::Demographic, &["Female", "Male"], "Female"),
        VariableSpec::continuous("age_quant", Role::Demographic).with_units("years"),
        VariableSpec::continuous("commutetime_quant", Role::Control).with_units("minutes"),
        VariableSpec::continuous("log_wage", Role::Wage),
    ]);
    Schema::new(specs).expect("fixture schema is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureGroup {
    pub policy: Policy,
    pub share: f64,
    /// Latent (efficiency, competence) δ per unit of firm value.
    pub delta: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub n: usize,
    pub seed: u64,
    /// MCAR rate applied to every column except the policy key.
    pub missing_rate: f64,
    pub groups: Vec<FixtureGroup>,
}

impl FixtureConfig {
    /// Distinct δ per policy; efficiency carries no moral hazard under a
    /// fully remote policy.
    pub fn new(n: usize, seed: u64) -> FixtureConfig {
        FixtureConfig {
            n,
            seed,
            missing_rate: 0.3,
            groups: vec![
                FixtureGroup {
                    policy: Policy::OnSite,
                    share: 0.43,
                    delta: [0.02, 0.04],
                },
                FixtureGroup {
                    policy: Policy::Hybrid,
                    share: 0.37,
                    delta: [0.01, 0.03],
                },
                FixtureGroup {
                    policy: Policy::FullyRemote,
                    share: 0.20,
                    delta: [0.0, 0.03],
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SubsampleTruth {
    pub policy: Policy,
    pub share: f64,
    /// δ of the latent factors.
    pub latent_delta: Vec<f64>,
    /// δ of the regression-predicted scores, what stage 2 estimates.
    pub score_delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FixtureTruth {
    pub labels: Vec<String>,
    pub codes: Vec<String>,
    /// Rows are factors, on the correlation scale.
    pub loadings: Vec<Vec<f64>>,
    pub uniquenesses: Vec<f64>,
    pub attenuation: Vec<f64>,
    pub sigma_eps2: f64,
    pub sigma_v2: f64,
    /// One entry per policy group, then the unfiltered sample.
    pub subsamples: Vec<SubsampleTruth>,
}

impl FixtureTruth {
    /// True score δ for a subsample and factor label.
    pub fn delta(&self, policy: Policy, label: &str) -> Option<f64> {
        let k = self.labels.iter().position(|l| l == label)?;
        self.subsamples
            .iter()
            .find(|s| s.policy == policy)
            .map(|s| s.score_delta[k])
    }
}

fn truth(cfg: &FixtureConfig) -> FixtureTruth {
    let omega: Vec<f64> = (0..6)
        .map(|j| 1.0 - LOADINGS[0][j].powi(2) - LOADINGS[1][j].powi(2))
        .collect();
    let attenuation: Vec<f64> = LOADINGS
        .iter()
        .map(|row| {
            let s: f64 = row.iter().zip(&omega).map(|(b, w)| b * b / w).sum();
            s / (1.0 + s)
        })
        .collect();
    let total: f64 = cfg.groups.iter().map(|g| g.share).sum();
    let mut subsamples: Vec<SubsampleTruth> = cfg
        .groups
        .iter()
        .map(|g| SubsampleTruth {
            policy: g.policy,
            share: g.share / total,
            latent_delta: g.delta.to_vec(),
            score_delta: (0..2).map(|k| attenuation[k] * g.delta[k]).collect(),
        })
        .collect();
    let pooled =
        |f: &dyn Fn(&SubsampleTruth) -> f64| subsamples.iter().map(|s| s.share * f(s)).sum::<f64>();
    let all = SubsampleTruth {
        policy: Policy::All,
        share: 1.0,
        latent_delta: (0..2).map(|k| pooled(&|s| s.latent_delta[k])).collect(),
        score_delta: (0..2).map(|k| pooled(&|s| s.score_delta[k])).collect(),
    };
    subsamples.push(all);
    FixtureTruth {
        labels: vec![EFFICIENCY.to_string(), COMPETENCE.to_string()],
        codes: productivity_codes(),
        loadings: LOADINGS.iter().map(|r| r.to_vec()).collect(),
        uniquenesses: omega,
        attenuation,
        sigma_eps2: SIGMA_EPS * SIGMA_EPS,
        sigma_v2: SIGMA_V2,
        subsamples,
    }
}

fn scaled(seed: u64, code: &str, n: usize, mean: f64, sd: f64) -> Vec<f64> {
    normals(seed, code, n)
        .into_iter()
        .map(|z| mean + sd * z)
        .collect()
}

fn bernoulli(seed: u64, code: &str, n: usize, p: f64) -> Vec<f64> {
    let mut rng = substream(seed, code, 0);
    (0..n)
        .map(|_| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
        .collect()
}

/// Draws the fixture and, when `missing_rate > 0`, masks it completely at random.
pub fn gen_pipeline_data(cfg: &FixtureConfig) -> Result<(Dataset, FixtureTruth)> {
    let t = truth(cfg);
    for g in &cfg.groups {
        let load = t.sigma_eps2 * (g.delta[0].powi(2) + g.delta[1].powi(2));
        if load > SIGMA_V2 {
            return Err(Error::Config(format!(
                "δ for {} too large: σ_ε²(δ₁² + δ₂²) = {load} exceeds σ_v² = {SIGMA_V2}",
                g.policy.name()
            )));
        }
    }
    let n = cfg.n;
    let seed = cfg.seed;
    let shares: Vec<(Policy, f64)> = cfg.groups.iter().map(|g| (g.policy, g.share)).collect();
    let levels = draw_policies(seed, n, &shares)?;
    let group = |i: usize| {
        cfg.groups
            .iter()
            .find(|g| g.policy.code() == Some(levels[i] + 1))
            .expect("drawn from groups")
    };

    let hours = scaled(seed, "wfh_hours_invest", n, 13.4, 10.0);
    let internet = scaled(seed, "internet_quality_quant", n, 0.94, 0.05);
    let room = bernoulli(seed, "wfh_ownroom_notbed", n, 0.5);
    let male = bernoulli(seed, "gender", n, 0.6);
    let age = scaled(seed, "age_quant", n, 41.0, 10.0);
    let commute = scaled(seed, "commutetime_quant", n, 37.7, 20.0);

    let eps: Vec<f64> = normals(seed, "eps", n)
        .into_iter()
        .map(|z| SIGMA_EPS * z)
        .collect();
    let z1 = normals(seed, "xi1", n);
    let z2 = normals(seed, "xi2", n);
    let half = (1.0 - SIGMA_V2).sqrt() / 2.0_f64.sqrt();
    let mut factors = DMatrix::zeros(n, 2);
    for i in 0..n {
        let d = group(i).delta;
        // Cholesky of Var(ξ) = σ_v² I − σ_ε² δδ'
        let a = SIGMA_V2 - t.sigma_eps2 * d[0] * d[0];
        let b = -t.sigma_eps2 * d[0] * d[1];
        let c = SIGMA_V2 - t.sigma_eps2 * d[1] * d[1];
        let l11 = a.sqrt();
        let l21 = if l11 > 0.0 { b / l11 } else { 0.0 };
        let l22 = (c - l21 * l21).max(0.0).sqrt();
        let xi1 = l11 * z1[i];
        let xi2 = l21 * z1[i] + l22 * z2[i];
        let x1 = half * ((hours[i] - 13.4) / 10.0 + (internet[i] - 0.94) / 0.05);
        let x2 = half * ((room[i] - 0.5) / 0.5 + (male[i] - 0.6) / 0.24_f64.sqrt());
        factors[(i, 0)] = x1 + d[0] * eps[i] + xi1;
        factors[(i, 1)] = x2 + d[1] * eps[i] + xi2;
    }

    let firm: Vec<f64> = (0..n)
        .map(|i| {
            20.0 + 0.06 * hours[i] + 3.0 * internet[i] - 1.3 * room[i]
                + 2.3 * male[i]
                + 0.05 * age[i]
                + 0.05 * commute[i]
                + eps[i]
        })
        .collect();
    let items: Vec<Vec<f64>> = (0..6)
        .map(|j| {
            let e = normals(seed, &t.codes[j], n);
            let sd = t.uniquenesses[j].sqrt();
            (0..n)
                .map(|i| {
                    let common =
                        LOADINGS[0][j] * factors[(i, 0)] + LOADINGS[1][j] * factors[(i, 1)];
                    ITEM_MEANS[j] + ITEM_SCALES[j] * (common + sd * e[i])
                })
                .collect()
        })
        .collect();
    let noise = normals(seed, "log_wage", n);
    let wage: Vec<f64> = (0..n)
        .map(|i| 4.5 + 0.15 * factors[(i, 0)] + 0.05 * factors[(i, 1)] + 0.7 * noise[i])
        .collect();

    let mut columns = vec![Column::Categorical(levels.clone()), Column::Numeric(firm)];
    columns.extend(items.into_iter().map(Column::Numeric));
    columns.extend([
        Column::Numeric(hours),
        Column::Numeric(internet),
        Column::Numeric(room),
        Column::Categorical(male.iter().map(|m| *m as u32).collect()),
        Column::Numeric(age),
        Column::Numeric(commute),
        Column::Numeric(wage),
    ]);
    let schema = fixture_schema();
    let q = schema.len();
    let provenance = Provenance {
        source: Some(format!("synthetic pipeline fixture (n {n}, seed {seed})")),
        filters: Vec::new(),
    };
    let d = Dataset::new(schema, columns, vec![vec![false; n]; q], provenance)?;
    let d = if cfg.missing_rate > 0.0 {
        let spec = MissingnessSpec::mcar(cfg.missing_rate);
        apply_missingness(&d, &spec, crate::rng::child_seed(seed, "fixture-mask", 0))?
    } else {
        d
    };
    debug_assert_eq!(d.schema().variables()[0].code, POLICY_CODE);
    Ok((d, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::policy_rows;

    #[test]
    fn truth_combines_subsamples_by_share() {
        let (_, t) = gen_pipeline_data(&FixtureConfig {
            missing_rate: 0.0,
            ..FixtureConfig::new(50, 1)
        })
        .unwrap();
        let all = t.delta(Policy::All, COMPETENCE).unwrap();
        let manual = 0.43 * t.attenuation[1] * 0.04
            + 0.37 * t.attenuation[1] * 0.03
            + 0.20 * t.attenuation[1] * 0.03;
        assert!((all - manual).abs() < 1e-15);
        assert_eq!(t.delta(Policy::FullyRemote, EFFICIENCY), Some(0.0));
        assert!(t.attenuation.iter().all(|a| *a > 0.5 && *a < 1.0));
    }

    #[test]
    fn fixture_masks_all_but_the_policy_key() {
        let (d, _) = gen_pipeline_data(&FixtureConfig::new(2000, 3)).unwrap();
        assert_eq!(d.missing_count(0), 0);
        let rate = d.total_missing() as f64 / (2000.0 * (d.n_vars() - 1) as f64);
        assert!((rate - 0.3).abs() < 0.01, "{rate}");
        let counts: usize = [Policy::OnSite, Policy::Hybrid, Policy::FullyRemote]
            .iter()
            .map(|p| policy_rows(&d, *p).unwrap().len())
            .sum();
        assert_eq!(counts, 2000);
    }

    #[test]
    fn latent_factors_have_identity_covariance() {
        // Items are standardized mixtures; their correlation must match β'β + Ω.
        let (d, t) = gen_pipeline_data(&FixtureConfig {
            missing_rate: 0.0,
            ..FixtureConfig::new(60_000, 4)
        })
        .unwrap();
        let cols: Vec<Vec<f64>> = t.codes.iter().map(|c| d.numeric(c).unwrap()).collect();
        let corr = |a: &[f64], b: &[f64]| {
            let (ma, mb) = (crate::linalg::mean(a), crate::linalg::mean(b));
            let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
            let saa: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
            let sbb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
            sab / (saa * sbb).sqrt()
        };
        for a in 0..6 {
            for b in 0..a {
                let implied = LOADINGS[0][a] * LOADINGS[0][b] + LOADINGS[1][a] * LOADINGS[1][b];
                assert!((corr(&cols[a], &cols[b]) - implied).abs() < 0.02, "{a},{b}");
            }
        }
    }

    #[test]
    fn too_much_hazard_is_rejected() {
        let mut cfg = FixtureConfig::new(10, 1);
        cfg.groups[0].delta = [0.1, 0.1];
        assert!(matches!(gen_pipeline_data(&cfg), Err(Error::Config(_))));
    }
}
