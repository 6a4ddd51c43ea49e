//! Maximum-likelihood factor analysis on the correlation scale.
//!
//! Columns of `Y` are residualized on the known mean design `M` and scaled
//! to unit variance. The loadings β (p×q) and uniquenesses Ω are fitted by
//! EM on the latent-factor formulation of the Wishart likelihood of
//! `U = YᵀQ_M·Y`, with factors standardized (Σ_xx = I).

mod rotation;
mod scores;

pub use rotation::{varimax, varimax_criterion};
pub use scores::{
    label_factors, loadings_report, predict_scores, FactorScores, LoadingRow, LoadingsTable,
    COMPETENCE, COMPETENCE_ITEMS, EFFICIENCY, EFFICIENCY_ITEM,
};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_traits::Float;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::spd_inverse_logdet;
use crate::runner::{Runner, Sequential};

/// Lower bound on every uniqueness during EM.
pub const HEYWOOD_FLOOR: f64 = 1e-4;

/// Largest `p ≥ 0` with `(q − p)² − p − q ≥ 0`.
pub fn max_factors(q: usize) -> usize {
    let ok = |p: usize| {
        let (q, p) = (q as i64, p as i64);
        (q - p) * (q - p) - p - q >= 0
    };
    (0..=q).take_while(|&p| ok(p)).last().unwrap_or(0)
}

/// Free parameters of the p-factor model: `q(p+1) − p(p−1)/2`.
pub fn free_parameters(q: usize, p: usize) -> usize {
    q * (p + 1) - p * p.saturating_sub(1) / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Aic,
    Bic,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
        }
    }

    pub fn parse(s: &str) -> Option<Criterion> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Some(Criterion::Aic),
            "bic" => Some(Criterion::Bic),
            _ => None,
        }
    }
}

/// AIC and BIC from a deviance `v·ln|β̂'β̂ + Ω̂|`.
pub fn criteria(deviance: f64, v: usize, q: usize, p: usize) -> (f64, f64) {
    let d = free_parameters(q, p) as f64;
    (deviance + 2.0 * d, deviance + (v as f64).ln() * d)
}

/// Observed matrix, known mean design and the standardization derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorProblem {
    codes: Vec<String>,
    y: DMatrix<f64>,
    m: DMatrix<f64>,
    /// k×q mean coefficients on the original scale.
    lambda: DMatrix<f64>,
    /// Residual standard deviation of each column (divisor v).
    scale: Vec<f64>,
    /// Correlation-scale cross-product U/v.
    s: DMatrix<f64>,
}

impl FactorProblem {
    /// `y` is n×q with columns named by `codes`; `m` defaults to an intercept.
    pub fn new(codes: Vec<String>, y: DMatrix<f64>, m: Option<DMatrix<f64>>) -> Result<Self> {
        let (n, q) = y.shape();
        if q == 0 {
            return Err(Error::Precondition(
                "factor analysis needs at least one variable".into(),
            ));
        }
        if codes.len() != q {
            return Err(Error::DimensionMismatch {
                what: "variable codes".into(),
                expected: q,
                got: codes.len(),
            });
        }
        let m = m.unwrap_or_else(|| DMatrix::from_element(n, 1, 1.0));
        let k = m.ncols();
        if m.nrows() != n {
            return Err(Error::DimensionMismatch {
                what: "rows of the mean design".into(),
                expected: n,
                got: m.nrows(),
            });
        }
        if n <= k + q {
            return Err(Error::InsufficientData {
                observations: n,
                parameters: k + q,
            });
        }
        if y.iter().chain(m.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "non-finite value in factor-analysis input".into(),
            ));
        }
        let qr = m.clone().qr();
        let r = qr.r();
        let sv = r.singular_values();
        if sv.min() <= crate::regression::RANK_TOLERANCE * sv.max() {
            return Err(Error::Precondition(
                "columns of the mean design are linearly dependent".into(),
            ));
        }
        let mut qty = y.clone();
        qr.q_tr_mul(&mut qty);
        let lambda = r
            .solve_upper_triangular(&qty.rows(0, k).into_owned())
            .ok_or_else(|| Error::Numerical("mean regression failed".into()))?;
        let resid = &y - &m * &lambda;
        let v = (n - k) as f64;
        let u = resid.tr_mul(&resid);
        let mut scale = Vec::with_capacity(q);
        for j in 0..q {
            let s = (u[(j, j)] / v).sqrt();
            if !(s > 0.0) {
                return Err(Error::Precondition(format!(
                    "`{}` has no variation around its mean",
                    codes[j]
                )));
            }
            scale.push(s);
        }
        let s = DMatrix::from_fn(q, q, |i, j| u[(i, j)] / v / (scale[i] * scale[j]));
        Ok(FactorProblem {
            codes,
            y,
            m,
            lambda,
            scale,
            s,
        })
    }

    /// The listed fully observed numeric columns of `d`, intercept-only mean.
    pub fn from_dataset(d: &Dataset, codes: &[&str]) -> Result<Self> {
        let cols: Vec<Vec<f64>> = codes.iter().map(|c| d.numeric(c)).collect::<Result<_>>()?;
        let y = DMatrix::from_fn(d.n_rows(), codes.len(), |i, j| cols[j][i]);
        FactorProblem::new(codes.iter().map(|c| c.to_string()).collect(), y, None)
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    pub fn k(&self) -> usize {
        self.m.ncols()
    }

    /// Wishart degrees of freedom `n − k`.
    pub fn v(&self) -> usize {
        self.n() - self.k()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn mean_design(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    /// Sample correlation of the mean residuals.
    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Relative change in the log-likelihood that ends EM.
    pub tol: f64,
    pub max_iter: usize,
    pub floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_iter: 1000,
            floor: HEYWOOD_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub codes: Vec<String>,
    pub p: usize,
    pub n: usize,
    pub v: usize,
    /// p×q loadings, rows index factors.
    pub beta: DMatrix<f64>,
    pub omega: Vec<f64>,
    /// k×q mean coefficients (original scale).
    pub lambda: DMatrix<f64>,
    /// Standardization divisor of each column.
    pub scale: Vec<f64>,
    /// Orthogonal Ψ applied so far; identity for an unrotated fit.
    pub rotation: DMatrix<f64>,
    /// `v·ln|β'β + Ω|`.
    pub deviance: f64,
    /// Wishart log-likelihood up to a constant: `−v/2·(ln|Σ| + tr(Σ⁻¹S))`.
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Uniquenesses held at the Heywood floor.
    pub floored: Vec<bool>,
}

impl FactorModel {
    pub fn q(&self) -> usize {
        self.omega.len()
    }

    /// β'β + Ω.
    pub fn implied_covariance(&self) -> DMatrix<f64> {
        let mut s = self.beta.tr_mul(&self.beta);
        for (j, w) in self.omega.iter().enumerate() {
            s[(j, j)] += w;
        }
        s
    }

    pub fn free_parameters(&self) -> usize {
        free_parameters(self.q(), self.p)
    }

    /// (AIC, BIC).
    pub fn information_criteria(&self) -> (f64, f64) {
        criteria(self.deviance, self.v, self.q(), self.p)
    }
}

/// (AIC, BIC) of a fitted model.
pub fn information_criteria(model: &FactorModel) -> (f64, f64) {
    model.information_criteria()
}

fn loglik(sigma: &DMatrix<f64>, s: &DMatrix<f64>, v: f64) -> Result<(f64, f64)> {
    let (inv, logdet) = spd_inverse_logdet(sigma)?;
    let tr = (inv * s).trace();
    Ok((-0.5 * v * (logdet + tr), v * logdet))
}

/// Makes the largest-magnitude loading of each factor (row) positive.
pub(crate) fn fix_signs(beta: &mut DMatrix<f64>) -> Vec<f64> {
    (0..beta.nrows())
        .map(|i| {
            let row = beta.row(i);
            let big = row
                .iter()
                .copied()
                .fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            if big < 0.0 {
                beta.row_mut(i).neg_mut();
                -1.0
            } else {
                1.0
            }
        })
        .collect()
}

/// Fits the p-factor model by EM from the principal-component start.
pub fn fit_fa(problem: &FactorProblem, p: usize, opts: &FitOptions) -> Result<FactorModel> {
    let q = problem.q();
    let max = max_factors(q);
    if p > max {
        return Err(Error::Identifiability { p, q, max });
    }
    let s = &problem.s;
    let v = problem.v() as f64;
    let floor = opts.floor;

    let mut l = DMatrix::zeros(q, p);
    let mut omega: Vec<f64> = (0..q).map(|j| s[(j, j)]).collect();
    if p > 0 {
        let eig = s.clone().symmetric_eigen();
        let mut idx: Vec<usize> = (0..q).collect();
        idx.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        for (c, &e) in idx.iter().take(p).enumerate() {
            let root = eig.eigenvalues[e].max(0.0).sqrt();
            for j in 0..q {
                l[(j, c)] = eig.eigenvectors[(j, e)] * root;
            }
        }
        for (j, w) in omega.iter_mut().enumerate() {
            let h: f64 = l.row(j).iter().map(|x| x * x).sum();
            *w = (s[(j, j)] - h).max(floor);
        }
    }

    let sigma_of = |l: &DMatrix<f64>, omega: &[f64]| {
        let mut m = l * l.transpose();
        for (j, w) in omega.iter().enumerate() {
            m[(j, j)] += w;
        }
        m
    };

    let (mut ll, _) = loglik(&sigma_of(&l, &omega), s, v)?;
    let mut trace = vec![ll];
    let mut converged = p == 0;
    let mut iterations = 0;
    if p > 0 {
        let eye = DMatrix::<f64>::identity(p, p);
        for it in 0..opts.max_iter {
            iterations = it + 1;
            let sigma = sigma_of(&l, &omega);
            let (inv, _) = spd_inverse_logdet(&sigma)?;
            let delta = l.transpose() * &inv;
            let cxx = &delta * s * delta.transpose() + &eye - &delta * &l;
            let cyx = s * delta.transpose();
            let cxx_inv = cxx
                .cholesky()
                .ok_or_else(|| {
                    Error::Numerical("EM factor second moment is not positive definite".into())
                })?
                .inverse();
            l = &cyx * cxx_inv;
            let lc = &l * cyx.transpose();
            for (j, w) in omega.iter_mut().enumerate() {
                *w = (s[(j, j)] - lc[(j, j)]).max(floor);
            }
            let (next, _) = loglik(&sigma_of(&l, &omega), s, v)?;
            trace.push(next);
            let change = (next - ll).abs();
            ll = next;
            if change <= opts.tol * ll.abs() {
                converged = true;
                break;
            }
        }
    }

    let mut beta = l.transpose();
    fix_signs(&mut beta);
    let (ll, deviance) = loglik(&sigma_of(&l, &omega), s, v)?;
    Ok(FactorModel {
        codes: problem.codes.clone(),
        p,
        n: problem.n(),
        v: problem.v(),
        beta,
        floored: omega.iter().map(|w| *w <= floor).collect(),
        omega,
        lambda: problem.lambda.clone(),
        scale: problem.scale.clone(),
        rotation: DMatrix::identity(p, p),
        deviance,
        loglik: ll,
        loglik_trace: trace,
        converged,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionEntry {
    pub p: usize,
    pub d_p: usize,
    pub deviance: f64,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
}

impl SelectionEntry {
    pub fn value(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTable {
    pub entries: Vec<SelectionEntry>,
    pub criterion: Criterion,
    pub chosen: usize,
}

impl SelectionTable {
    /// Picks the converged entry with the smallest criterion value (ties go
    /// to the smaller p).
    pub fn from_entries(entries: Vec<SelectionEntry>, criterion: Criterion) -> Result<Self> {
        let best = entries
            .iter()
            .filter(|e| e.converged && e.value(criterion).is_finite())
            .min_by(|a, b| {
                a.value(criterion)
                    .total_cmp(&b.value(criterion))
                    .then(a.p.cmp(&b.p))
            })
            .ok_or_else(|| Error::Selection("no candidate factor model converged".into()))?;
        let chosen = best.p;
        Ok(SelectionTable {
            entries,
            criterion,
            chosen,
        })
    }
}

/// Fits every identifiable p and selects by `criterion`.
pub fn select_p(
    problem: &FactorProblem,
    criterion: Criterion,
    opts: &FitOptions,
) -> Result<SelectionTable> {
    Ok(select_p_with(problem, criterion, opts, &Sequential)?.0)
}

/// As [`select_p`], fitting candidates on `runner`; also returns the fits,
/// indexed by p.
pub fn select_p_with<R: Runner>(
    problem: &FactorProblem,
    criterion: Criterion,
    opts: &FitOptions,
    runner: &R,
) -> Result<(SelectionTable, Vec<FactorModel>)> {
    let max = max_factors(problem.q());
    let models: Vec<FactorModel> = runner
        .map(max + 1, |p| fit_fa(problem, p, opts))
        .into_iter()
        .collect::<Result<_>>()?;
    let entries = models
        .iter()
        .map(|m| {
            let (aic, bic) = m.information_criteria();
            SelectionEntry {
                p: m.p,
                d_p: m.free_parameters(),
                deviance: m.deviance,
                aic,
                bic,
                converged: m.converged,
            }
        })
        .collect();
    Ok((SelectionTable::from_entries(entries, criterion)?, models))
}

/// Scores a dataset's columns: fit, varimax, predict. Convenience for
/// callers that already know p.
pub fn fit_rotate_score(
    problem: &FactorProblem,
    p: usize,
    opts: &FitOptions,
) -> Result<(FactorModel, FactorScores)> {
    let model = fit_fa(problem, p, opts)?;
    let model = if p >= 1 { varimax(&model)? } else { model };
    let scores = predict_scores(&model, problem)?;
    Ok((model, scores))
}
