use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dataset::{Column, Dataset};
use crate::error::{Error, Result};
use crate::special::chi_square_sf;

const EM_TOLERANCE: f64 = 1e-6;
const EM_MAX_ITER: usize = 500;

/// Little's chi-square test of missing completely at random.
#[derive(Debug, Clone, PartialEq)]
pub struct LittleTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub patterns: usize,
    /// Numeric columns entering the test (categoricals as dummies).
    pub variables: Vec<String>,
    pub n_used: usize,
    pub em_iterations: usize,
    pub converged: bool,
}

/// Numeric columns with their masks; categoricals become non-reference
/// dummies that are missing wherever the category is.
pub(crate) fn numeric_view(d: &Dataset) -> Vec<(String, Vec<f64>, Vec<bool>)> {
    let mut out = Vec::new();
    for (j, spec) in d.schema().variables().iter().enumerate() {
        let mask = &d.mask()[j];
        match d.column(j) {
            Column::Numeric(v) => out.push((spec.code.clone(), v.clone(), mask.clone())),
            Column::Categorical(levels) => {
                let reference = spec.reference_index().unwrap_or(0);
                for (c, label) in spec.categories.iter().enumerate() {
                    if c == reference {
                        continue;
                    }
                    let vals = levels
                        .iter()
                        .map(|&l| if l as usize == c { 1.0 } else { 0.0 })
                        .collect();
                    out.push((format!("{}_{}", spec.code, label), vals, mask.clone()));
                }
            }
        }
    }
    out
}

struct Pattern {
    obs: Vec<usize>,
    mis: Vec<usize>,
    n: f64,
    s1: DVector<f64>,
    s2: DMatrix<f64>,
}

fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn subv(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// Little's test. Categorical variables enter through dummies; columns
/// without variation and rows with nothing observed are left out. The grand
/// mean and covariance are maximum-likelihood estimates from EM.
pub fn little_mcar_test(d: &Dataset) -> Result<LittleTest> {
    let view: Vec<_> = numeric_view(d)
        .into_iter()
        .filter(|(_, v, m)| {
            let mut obs = v.iter().zip(m).filter(|(_, m)| !**m).map(|(x, _)| *x);
            match obs.next() {
                None => false,
                Some(first) => obs.any(|x| x != first),
            }
        })
        .collect();
    let p = view.len();
    if p == 0 {
        return Err(Error::DegenerateTest(
            "no variable with observed variation".into(),
        ));
    }

    let mut groups: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for i in 0..d.n_rows() {
        let key: Vec<bool> = view.iter().map(|(_, _, m)| m[i]).collect();
        if key.iter().all(|m| *m) {
            continue;
        }
        groups.entry(key).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::DegenerateTest(format!(
            "{} missingness pattern(s); the test needs at least 2",
            groups.len()
        )));
    }

    let mut patterns = Vec::with_capacity(groups.len());
    let mut n_used = 0usize;
    for (key, rows) in &groups {
        let obs: Vec<usize> = (0..p).filter(|&j| !key[j]).collect();
        let mis: Vec<usize> = (0..p).filter(|&j| key[j]).collect();
        let k = obs.len();
        let mut s1 = DVector::zeros(k);
        let mut s2 = DMatrix::zeros(k, k);
        let mut x = DVector::zeros(k);
        for &i in rows {
            for (a, &j) in obs.iter().enumerate() {
                x[a] = view[j].1[i];
            }
            s1 += &x;
            s2.ger(1.0, &x, &x, 1.0);
        }
        n_used += rows.len();
        patterns.push(Pattern {
            obs,
            mis,
            n: rows.len() as f64,
            s1,
            s2,
        });
    }

    // start from observed means and variances
    let mut mu = DVector::zeros(p);
    let mut sigma = DMatrix::zeros(p, p);
    for (j, (_, v, m)) in view.iter().enumerate() {
        let obs: Vec<f64> = v
            .iter()
            .zip(m)
            .filter(|(_, m)| !**m)
            .map(|(x, _)| *x)
            .collect();
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        mu[j] = mean;
        sigma[(j, j)] = obs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / obs.len() as f64;
    }

    let total = n_used as f64;
    let mut ll_prev = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..EM_MAX_ITER {
        iterations = it + 1;
        let mut t1 = DVector::zeros(p);
        let mut t2 = DMatrix::zeros(p, p);
        let mut ll = 0.0;
        for pat in &patterns {
            let mu_o = subv(&mu, &pat.obs);
            let s_oo = sub(&sigma, &pat.obs, &pat.obs);
            let (inv, logdet) = crate::linalg::spd_inverse_logdet(&s_oo).map_err(|_| {
                Error::Numerical("EM covariance became singular in Little's test".into())
            })?;
            let centered = &pat.s2 - &pat.s1 * mu_o.transpose() - &mu_o * pat.s1.transpose()
                + &mu_o * mu_o.transpose() * pat.n;
            ll -= 0.5 * (pat.n * logdet + (&inv * centered).trace());

            for (a, &j) in pat.obs.iter().enumerate() {
                t1[j] += pat.s1[a];
                for (b, &l) in pat.obs.iter().enumerate() {
                    t2[(j, l)] += pat.s2[(a, b)];
                }
            }
            if pat.mis.is_empty() {
                continue;
            }
            let s_mo = sub(&sigma, &pat.mis, &pat.obs);
            let s_mm = sub(&sigma, &pat.mis, &pat.mis);
            let b = &s_mo * &inv;
            let c = &s_mm - &b * s_mo.transpose();
            let a = subv(&mu, &pat.mis) - &b * &mu_o;
            let bs1 = &b * &pat.s1;
            let sum_m = &a * pat.n + &bs1;
            let cross = &a * pat.s1.transpose() + &b * &pat.s2;
            let mm = &a * a.transpose() * pat.n
                + &a * bs1.transpose()
                + &bs1 * a.transpose()
                + &b * &pat.s2 * b.transpose()
                + c * pat.n;
            for (a_i, &j) in pat.mis.iter().enumerate() {
                t1[j] += sum_m[a_i];
                for (b_i, &l) in pat.obs.iter().enumerate() {
                    t2[(j, l)] += cross[(a_i, b_i)];
                    t2[(l, j)] += cross[(a_i, b_i)];
                }
                for (b_i, &l) in pat.mis.iter().enumerate() {
                    t2[(j, l)] += mm[(a_i, b_i)];
                }
            }
        }
        mu = t1 / total;
        sigma = t2 / total - &mu * mu.transpose();
        sigma = (&sigma + sigma.transpose()) * 0.5;
        if (ll - ll_prev).abs() < EM_TOLERANCE {
            converged = true;
            break;
        }
        ll_prev = ll;
    }

    let mut statistic = 0.0;
    let mut df = 0usize;
    for pat in &patterns {
        let s_oo = sub(&sigma, &pat.obs, &pat.obs);
        let (inv, _) = crate::linalg::spd_inverse_logdet(&s_oo)
            .map_err(|_| Error::Numerical("EM covariance is singular in Little's test".into()))?;
        let diff = &pat.s1 / pat.n - subv(&mu, &pat.obs);
        statistic += pat.n * (diff.transpose() * &inv * &diff)[(0, 0)];
        df += pat.obs.len();
    }
    let df = df - p;
    Ok(LittleTest {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df as f64),
        patterns: patterns.len(),
        variables: view.into_iter().map(|(c, _, _)| c).collect(),
        n_used,
        em_iterations: iterations,
        converged,
    })
}
