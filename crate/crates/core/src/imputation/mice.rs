use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_traits::Float;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::dataset::{Column, Dataset};
use crate::error::{Error, Result};
use crate::rng::{substream, StreamRng};
use crate::runner::{Runner, Sequential};

/// Donor pool size for predictive mean matching.
pub const PMM_DONORS: usize = 5;
/// Observed cells a variable needs before it can be imputed.
pub const MIN_OBSERVED: usize = 30;
const RIDGE: f64 = 1e-5;

/// Per-variable imputation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    /// Predictive mean matching (continuous and binary variables).
    Pmm,
    /// Draws from one-vs-rest linear-probability scores (categorical variables).
    LinearProbability,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Pmm => "pmm",
            Engine::LinearProbability => "lpm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiceOptions {
    pub m: usize,
    pub iterations: usize,
    pub seed: u64,
    pub donors: usize,
    /// Impute separately within the levels of this fully observed
    /// categorical variable.
    pub strata: Option<String>,
}

impl MiceOptions {
    pub fn new(m: usize, iterations: usize, seed: u64) -> Self {
        MiceOptions {
            m,
            iterations,
            seed,
            donors: PMM_DONORS,
            strata: None,
        }
    }
}

/// Mean of the imputed cells of one variable after every sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableTrace {
    pub code: String,
    pub engine: Engine,
    pub missing: usize,
    /// `means[imputation][iteration]`; categorical variables use 1-based codes.
    pub means: Vec<Vec<f64>>,
}

/// `m` completed copies of a dataset and the chain traces that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationSet {
    pub m: usize,
    pub iterations: usize,
    pub seed: u64,
    pub donors: usize,
    pub strata: Option<String>,
    pub completed: Vec<Dataset>,
    /// In visiting order (ascending missingness).
    pub traces: Vec<VariableTrace>,
}

/// Multiple imputation by chained equations, run sequentially.
pub fn mice_impute(d: &Dataset, m: usize, iterations: usize, seed: u64) -> Result<ImputationSet> {
    mice_impute_with(d, &MiceOptions::new(m, iterations, seed), &Sequential)
}

/// Multiple imputation by chained equations; the `m` chains are handed to
/// `runner`. Chain `i` draws only from substream `i` of the seed.
pub fn mice_impute_with<R: Runner>(
    d: &Dataset,
    opts: &MiceOptions,
    runner: &R,
) -> Result<ImputationSet> {
    if opts.m == 0 || opts.iterations == 0 {
        return Err(Error::Config(
            "m and iterations must both be at least 1".into(),
        ));
    }
    if opts.donors == 0 {
        return Err(Error::Config("PMM donor count must be at least 1".into()));
    }
    let plan = Plan::new(d, opts)?;
    let chains = runner.map(opts.m, |i| plan.run_chain(d, opts, i));
    let mut completed = Vec::with_capacity(opts.m);
    let mut traces: Vec<VariableTrace> = plan
        .order
        .iter()
        .map(|&j| VariableTrace {
            code: d.schema().variables()[j].code.clone(),
            engine: plan.engine(j),
            missing: d.missing_count(j),
            means: Vec::with_capacity(opts.m),
        })
        .collect();
    for chain in chains {
        let (data, means) = chain?;
        completed.push(data);
        for (t, m) in traces.iter_mut().zip(means) {
            t.means.push(m);
        }
    }
    Ok(ImputationSet {
        m: opts.m,
        iterations: opts.iterations,
        seed: opts.seed,
        donors: opts.donors,
        strata: opts.strata.clone(),
        completed,
        traces,
    })
}

struct Stratum {
    /// Per variable: (observed rows, missing rows) within the stratum.
    rows: Vec<(Vec<usize>, Vec<usize>)>,
}

struct Plan {
    /// Levels of each categorical variable, 0 for numeric ones.
    levels: Vec<usize>,
    reference: Vec<usize>,
    /// Variables with missing cells, fewest missing first.
    order: Vec<usize>,
    strata: Vec<Stratum>,
    exclude: Option<usize>,
}

impl Plan {
    fn new(d: &Dataset, opts: &MiceOptions) -> Result<Plan> {
        let schema = d.schema();
        let q = schema.len();
        let levels: Vec<usize> = schema
            .variables()
            .iter()
            .map(|v| v.categories.len())
            .collect();
        let reference: Vec<usize> = schema
            .variables()
            .iter()
            .map(|v| v.reference_index().unwrap_or(0))
            .collect();
        let mut order: Vec<usize> = (0..q).filter(|&j| d.missing_count(j) > 0).collect();
        order.sort_by_key(|&j| (d.missing_count(j), j));

        let (groups, exclude): (Vec<Vec<usize>>, Option<usize>) = match &opts.strata {
            None => (vec![(0..d.n_rows()).collect()], None),
            Some(code) => {
                let s = schema.require(code)?;
                let Column::Categorical(lv) = d.column(s) else {
                    return Err(Error::Config(format!(
                        "stratification variable `{code}` must be categorical"
                    )));
                };
                if d.missing_count(s) > 0 {
                    return Err(Error::Precondition(format!(
                        "stratification variable `{code}` has missing cells"
                    )));
                }
                let mut g = vec![Vec::new(); levels[s]];
                for (i, l) in lv.iter().enumerate() {
                    g[*l as usize].push(i);
                }
                g.retain(|rows| !rows.is_empty());
                (g, Some(s))
            }
        };

        let mut strata = Vec::with_capacity(groups.len());
        for rows in &groups {
            let mut per_var = Vec::with_capacity(q);
            for j in 0..q {
                let (mis, obs): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| d.is_missing(i, j));
                if !mis.is_empty() && obs.len() < MIN_OBSERVED {
                    let variable = match (exclude, &opts.strata) {
                        (Some(s), Some(code)) => {
                            let label = &schema.variables()[s].categories[level_of(d, s, rows[0])];
                            format!("{} (stratum {code} = {label})", schema.variables()[j].code)
                        }
                        _ => schema.variables()[j].code.clone(),
                    };
                    return Err(Error::InsufficientSupport {
                        variable,
                        observed: obs.len(),
                        required: MIN_OBSERVED,
                    });
                }
                per_var.push((obs, mis));
            }
            strata.push(Stratum { rows: per_var });
        }
        Ok(Plan {
            levels,
            reference,
            order,
            strata,
            exclude,
        })
    }

    fn engine(&self, j: usize) -> Engine {
        if self.levels[j] > 0 {
            Engine::LinearProbability
        } else {
            Engine::Pmm
        }
    }

    /// Intercept plus every other variable (categoricals as non-reference dummies).
    fn design(&self, state: &[Vec<f64>], target: usize, rows: &[usize]) -> DMatrix<f64> {
        let preds: Vec<usize> = (0..state.len())
            .filter(|&k| k != target && Some(k) != self.exclude)
            .collect();
        let width = 1 + preds
            .iter()
            .map(|&k| {
                if self.levels[k] > 0 {
                    self.levels[k] - 1
                } else {
                    1
                }
            })
            .sum::<usize>();
        let mut x = DMatrix::zeros(rows.len(), width);
        x.column_mut(0).fill(1.0);
        let mut c = 1;
        for &k in &preds {
            let col = &state[k];
            if self.levels[k] == 0 {
                for (r, &i) in rows.iter().enumerate() {
                    x[(r, c)] = col[i];
                }
                c += 1;
            } else {
                for (r, &i) in rows.iter().enumerate() {
                    let l = col[i] as usize;
                    if l != self.reference[k] {
                        let offset = if l < self.reference[k] { l } else { l - 1 };
                        x[(r, c + offset)] = 1.0;
                    }
                }
                c += self.levels[k] - 1;
            }
        }
        x
    }

    fn run_chain(
        &self,
        d: &Dataset,
        opts: &MiceOptions,
        index: usize,
    ) -> Result<(Dataset, Vec<Vec<f64>>)> {
        let mut rng = substream(opts.seed, "mice", index as u64);
        let mut state: Vec<Vec<f64>> = d
            .columns()
            .iter()
            .map(|c| match c {
                Column::Numeric(v) => v.clone(),
                Column::Categorical(l) => l.iter().map(|x| f64::from(*x)).collect(),
            })
            .collect();

        for stratum in &self.strata {
            for &j in &self.order {
                let (obs, mis) = &stratum.rows[j];
                for &i in mis {
                    let donor = obs[rng.random_range(0..obs.len())];
                    state[j][i] = state[j][donor];
                }
            }
        }

        let mut means = vec![Vec::with_capacity(opts.iterations); self.order.len()];
        for _ in 0..opts.iterations {
            for stratum in &self.strata {
                for &j in &self.order {
                    let (obs, mis) = &stratum.rows[j];
                    if mis.is_empty() {
                        continue;
                    }
                    let x_obs = self.design(&state, j, obs);
                    let x_mis = self.design(&state, j, mis);
                    let draws = if self.levels[j] == 0 {
                        let y: Vec<f64> = obs.iter().map(|&i| state[j][i]).collect();
                        pmm(&x_obs, &y, &x_mis, opts.donors, &mut rng)?
                    } else {
                        let y: Vec<usize> = obs.iter().map(|&i| state[j][i] as usize).collect();
                        lpm(&x_obs, &y, self.levels[j], &x_mis, &mut rng)?
                    };
                    for (&i, v) in mis.iter().zip(draws) {
                        state[j][i] = v;
                    }
                }
            }
            for (t, &j) in self.order.iter().enumerate() {
                let offset = if self.levels[j] > 0 { 1.0 } else { 0.0 };
                let (mut sum, mut count) = (0.0, 0usize);
                for stratum in &self.strata {
                    for &i in &stratum.rows[j].1 {
                        sum += state[j][i] + offset;
                        count += 1;
                    }
                }
                means[t].push(sum / count as f64);
            }
        }

        let mut out = d.clone();
        {
            let (_, columns, mask) = out.parts_mut();
            for &j in &self.order {
                for stratum in &self.strata {
                    for &i in &stratum.rows[j].1 {
                        match &mut columns[j] {
                            Column::Numeric(v) => v[i] = state[j][i],
                            Column::Categorical(l) => l[i] = state[j][i] as u32,
                        }
                        mask[j][i] = false;
                    }
                }
            }
        }
        Ok((
            out.with_note(&format!("imputation {} of {}", index + 1, opts.m)),
            means,
        ))
    }
}

fn level_of(d: &Dataset, col: usize, row: usize) -> usize {
    match d.column(col) {
        Column::Categorical(l) => l[row] as usize,
        Column::Numeric(_) => 0,
    }
}

fn ridge_cholesky(x: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let mut a = x.tr_mul(x);
    for i in 0..a.nrows() {
        let v = a[(i, i)];
        a[(i, i)] = v + RIDGE * if v > 0.0 { v } else { 1.0 };
    }
    a.cholesky().ok_or_else(|| {
        Error::Numerical("imputation model cross-product is not positive definite".into())
    })
}

/// Predictive mean matching with a posterior draw of the regression
/// parameters: observed rows are matched on X·β̂, missing rows on X·β*.
fn pmm(
    x_obs: &DMatrix<f64>,
    y: &[f64],
    x_mis: &DMatrix<f64>,
    k: usize,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let chol = ridge_cholesky(x_obs)?;
    let yv = DVector::from_column_slice(y);
    let beta = chol.solve(&x_obs.tr_mul(&yv));
    let fitted = x_obs * &beta;
    let ssr: f64 = (&yv - &fitted).iter().map(|e| e * e).sum();
    let dof = (y.len() as f64 - beta.len() as f64).max(1.0);
    let chi = ChiSquared::new(dof)
        .map_err(|_| Error::Numerical("invalid chi-square degrees of freedom".into()))?;
    let sigma = (ssr / chi.sample(rng)).sqrt();
    let z = DVector::from_fn(beta.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let u = chol
        .l()
        .tr_solve_lower_triangular(&z)
        .ok_or_else(|| Error::Numerical("posterior draw failed".into()))?;
    let beta_star = &beta + u * sigma;
    let targets = x_mis * beta_star;

    let mut sorted: Vec<usize> = (0..y.len()).collect();
    sorted.sort_by(|&a, &b| fitted[a].total_cmp(&fitted[b]));
    let k = k.min(y.len());
    let mut pool = Vec::with_capacity(k);
    Ok(targets
        .iter()
        .map(|&t| {
            let pos = sorted.partition_point(|&i| fitted[i] < t);
            let (mut lo, mut hi) = (pos, pos);
            pool.clear();
            while pool.len() < k {
                let take_lo = match (lo > 0, hi < sorted.len()) {
                    (true, true) => t - fitted[sorted[lo - 1]] <= fitted[sorted[hi]] - t,
                    (true, false) => true,
                    _ => false,
                };
                if take_lo {
                    lo -= 1;
                    pool.push(sorted[lo]);
                } else {
                    pool.push(sorted[hi]);
                    hi += 1;
                }
            }
            y[pool[rng.random_range(0..pool.len())]]
        })
        .collect())
}

/// One-vs-rest linear-probability scores, clipped to [0, 1], normalized and drawn.
fn lpm(
    x_obs: &DMatrix<f64>,
    y: &[usize],
    levels: usize,
    x_mis: &DMatrix<f64>,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let chol = ridge_cholesky(x_obs)?;
    let ind = DMatrix::from_fn(y.len(), levels, |i, c| if y[i] == c { 1.0 } else { 0.0 });
    let coef = chol.solve(&x_obs.tr_mul(&ind));
    let scores = x_mis * coef;
    Ok((0..x_mis.nrows())
        .map(|r| {
            let p: Vec<f64> = (0..levels)
                .map(|c| scores[(r, c)].clamp(0.0, 1.0))
                .collect();
            let total: f64 = p.iter().sum();
            let u: f64 = rng.random();
            if total <= 0.0 {
                return ((u * levels as f64) as usize).min(levels - 1) as f64;
            }
            let mut acc = 0.0;
            for (c, pc) in p.iter().enumerate() {
                acc += pc / total;
                if u < acc {
                    return c as f64;
                }
            }
            (levels - 1) as f64
        })
        .collect())
}

impl ImputationSet {
    /// Visit order with engines, for persisted metadata.
    pub fn engines(&self) -> Vec<(String, &'static str)> {
        self.traces
            .iter()
            .map(|t| (t.code.to_string(), t.engine.name()))
            .collect()
    }
}
