use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::dataset::{Column, Dataset, VariableKind};
use crate::error::Result;

/// Covariate distribution among rows where the target is missing versus observed.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupSummary {
    /// Relative category frequencies (0/1 for binary covariates).
    Categorical {
        labels: Vec<String>,
        missing: Vec<f64>,
        observed: Vec<f64>,
    },
    /// Deciles 10%..90% of a continuous covariate.
    Deciles {
        missing: Vec<f64>,
        observed: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarDiagnostic {
    pub target: String,
    pub covariate: String,
    pub n_missing: usize,
    pub n_observed: usize,
    pub summary: GroupSummary,
    /// Total-variation distance between the two empirical distributions
    /// (over decile bins of the pooled covariate for continuous covariates).
    pub tv_distance: f64,
}

/// For every variable with missing cells and every covariate, compares the
/// covariate's distribution between the target's missing and observed rows.
/// Rows where the covariate itself is missing are ignored. Pairs where either
/// group is empty are skipped.
pub fn mar_diagnostic(d: &Dataset, covariates: &[&str]) -> Result<Vec<MarDiagnostic>> {
    let schema = d.schema();
    let cov_idx: Vec<usize> = covariates
        .iter()
        .map(|c| schema.require(c))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (t, target) in schema.variables().iter().enumerate() {
        if d.missing_count(t) == 0 {
            continue;
        }
        for &c in &cov_idx {
            if c == t {
                continue;
            }
            let cspec = &schema.variables()[c];
            let rows = (0..d.n_rows()).filter(|&i| !d.is_missing(i, c));
            let (mis_rows, obs_rows): (Vec<usize>, Vec<usize>) =
                rows.partition(|&i| d.is_missing(i, t));
            if mis_rows.is_empty() || obs_rows.is_empty() {
                continue;
            }
            let (summary, tv) = match (d.column(c), cspec.kind) {
                (Column::Categorical(levels), _) => {
                    let k = cspec.categories.len();
                    let freq = |rows: &[usize]| {
                        let mut f = vec![0.0; k];
                        for &i in rows {
                            f[levels[i] as usize] += 1.0;
                        }
                        f.iter()
                            .map(|x| x / rows.len() as f64)
                            .collect::<Vec<f64>>()
                    };
                    let (fm, fo) = (freq(&mis_rows), freq(&obs_rows));
                    let tv = tv_distance(&fm, &fo);
                    (
                        GroupSummary::Categorical {
                            labels: cspec.categories.clone(),
                            missing: fm,
                            observed: fo,
                        },
                        tv,
                    )
                }
                (Column::Numeric(v), VariableKind::Binary) => {
                    let freq = |rows: &[usize]| {
                        let ones = rows.iter().filter(|&&i| v[i] == 1.0).count() as f64
                            / rows.len() as f64;
                        vec![1.0 - ones, ones]
                    };
                    let (fm, fo) = (freq(&mis_rows), freq(&obs_rows));
                    let tv = tv_distance(&fm, &fo);
                    (
                        GroupSummary::Categorical {
                            labels: vec!["0".into(), "1".into()],
                            missing: fm,
                            observed: fo,
                        },
                        tv,
                    )
                }
                (Column::Numeric(v), _) => {
                    let mut pooled: Vec<f64> =
                        mis_rows.iter().chain(&obs_rows).map(|&i| v[i]).collect();
                    pooled.sort_by(f64::total_cmp);
                    let cuts = deciles(&pooled);
                    let bins = |rows: &[usize]| {
                        let mut f = vec![0.0; cuts.len() + 1];
                        for &i in rows {
                            f[cuts.iter().filter(|c| v[i] > **c).count()] += 1.0;
                        }
                        f.iter()
                            .map(|x| x / rows.len() as f64)
                            .collect::<Vec<f64>>()
                    };
                    let tv = tv_distance(&bins(&mis_rows), &bins(&obs_rows));
                    let sorted = |rows: &[usize]| {
                        let mut s: Vec<f64> = rows.iter().map(|&i| v[i]).collect();
                        s.sort_by(f64::total_cmp);
                        deciles(&s)
                    };
                    (
                        GroupSummary::Deciles {
                            missing: sorted(&mis_rows),
                            observed: sorted(&obs_rows),
                        },
                        tv,
                    )
                }
            };
            out.push(MarDiagnostic {
                target: target.code.clone(),
                covariate: cspec.code.clone(),
                n_missing: mis_rows.len(),
                n_observed: obs_rows.len(),
                summary,
                tv_distance: tv,
            });
        }
    }
    Ok(out)
}

fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// 10%..90% quantiles of sorted data, linear interpolation between order statistics.
fn deciles(sorted: &[f64]) -> Vec<f64> {
    let n = sorted.len();
    (1..10)
        .map(|k| {
            let h = (n - 1) as f64 * k as f64 / 10.0;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Provenance, Role, Schema, VariableSpec};
    use rand::{Rng, SeedableRng};

    fn build(
        n: usize,
        seed: u64,
        rule: impl Fn(u32, f64, &mut rand_chacha::ChaCha8Rng) -> bool,
    ) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let schema = Schema::new(vec![
            VariableSpec::categorical("race", Role::Demographic, &["A", "B", "C"], "A"),
            VariableSpec::continuous("age_quant", Role::Demographic),
            VariableSpec::continuous("y", Role::ProductivityComponent),
        ])
        .unwrap();
        let race: Vec<u32> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let age: Vec<f64> = (0..n).map(|_| rng.random_range(20.0..65.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let mask: Vec<bool> = (0..n).map(|i| rule(race[i], age[i], &mut rng)).collect();
        Dataset::new(
            schema,
            vec![
                Column::Categorical(race),
                Column::Numeric(age),
                Column::Numeric(y),
            ],
            vec![vec![false; n], vec![false; n], mask],
            Provenance::default(),
        )
        .unwrap()
    }

    #[test]
    fn independent_missingness_has_small_tv() {
        let d = build(5000, 1, |_, _, rng| rng.random::<f64>() < 0.3);
        let diags = mar_diagnostic(&d, &["race", "age_quant"]).unwrap();
        assert_eq!(diags.len(), 2);
        for m in &diags {
            assert!(
                m.tv_distance <= 0.05,
                "{} tv {}",
                m.covariate,
                m.tv_distance
            );
        }
    }

    #[test]
    fn deterministic_missingness_in_category_has_tv_one() {
        let d = build(600, 2, |race, _, _| race == 1);
        let diags = mar_diagnostic(&d, &["race"]).unwrap();
        assert!((diags[0].tv_distance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_groups_have_tv_zero() {
        // every second row of each race is missing: identical race frequencies by construction
        let n = 600;
        let schema = Schema::new(vec![
            VariableSpec::categorical("race", Role::Demographic, &["A", "B"], "A"),
            VariableSpec::continuous("y", Role::Control),
        ])
        .unwrap();
        let race: Vec<u32> = (0..n).map(|i| ((i / 2) % 2) as u32).collect();
        let mask: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let d = Dataset::new(
            schema,
            vec![Column::Categorical(race), Column::Numeric(vec![0.5; n])],
            vec![vec![false; n], mask],
            Provenance::default(),
        )
        .unwrap();
        let diags = mar_diagnostic(&d, &["race"]).unwrap();
        assert_eq!(diags[0].tv_distance, 0.0);
    }

    #[test]
    fn deciles_interpolate() {
        let v: Vec<f64> = (0..11).map(f64::from).collect();
        assert_eq!(deciles(&v), (1..10).map(f64::from).collect::<Vec<_>>());
    }
}
