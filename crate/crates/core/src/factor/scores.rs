use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::{FactorModel, FactorProblem};
use crate::error::{Error, Result};
use crate::linalg::spd_inverse_logdet;

pub const EFFICIENCY: &str = "efficiency";
pub const COMPETENCE: &str = "competence";
/// Item whose strongest factor is labeled efficiency.
pub const EFFICIENCY_ITEM: &str = "wfh_eff_COVID_quant";
/// Items whose dominant factor is labeled competence.
pub const COMPETENCE_ITEMS: [&str; 2] = ["prom_eff_1day_quant", "prom_eff_5day_quant"];

#[derive(Debug, Clone, PartialEq)]
pub struct FactorScores {
    /// n×p predicted factor values.
    pub scores: DMatrix<f64>,
    pub labels: Vec<String>,
    pub ss_loadings: Vec<f64>,
    pub proportion_var: Vec<f64>,
    pub cumulative_var: Vec<f64>,
}

impl FactorScores {
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn column(&self, label: &str) -> Option<Vec<f64>> {
        self.index_of(label)
            .map(|i| self.scores.column(i).iter().copied().collect())
    }
}

/// Labels factors by rule: the factor loading most on the efficiency item is
/// "efficiency"; of the rest, the one with the largest absolute loadings on
/// the promotion items is "competence". Other factors are "Factor i".
pub fn label_factors(model: &FactorModel) -> Vec<String> {
    let mut labels: Vec<String> = (0..model.p).map(|i| format!("Factor {}", i + 1)).collect();
    let col = |code: &str| model.codes.iter().position(|c| c == code);
    let mut taken = None;
    if let Some(j) = col(EFFICIENCY_ITEM) {
        if let Some(f) = (0..model.p).max_by(|&a, &b| {
            model.beta[(a, j)]
                .total_cmp(&model.beta[(b, j)])
                .then(b.cmp(&a))
        }) {
            labels[f] = EFFICIENCY.to_string();
            taken = Some(f);
        }
    }
    let items: Vec<usize> = COMPETENCE_ITEMS.iter().filter_map(|c| col(c)).collect();
    if !items.is_empty() {
        let weight = |f: usize| items.iter().map(|&j| model.beta[(f, j)].abs()).sum::<f64>();
        if let Some(f) = (0..model.p)
            .filter(|f| Some(*f) != taken)
            .max_by(|&a, &b| weight(a).total_cmp(&weight(b)).then(b.cmp(&a)))
        {
            labels[f] = COMPETENCE.to_string();
        }
    }
    labels
}

/// X̂ = (Y − Mλ̂)·D⁻¹·(β'β + Ω)⁻¹·β' on the problem's rows, in the
/// standardized space of the fit.
pub fn predict_scores(model: &FactorModel, problem: &FactorProblem) -> Result<FactorScores> {
    if problem.codes() != model.codes.as_slice() {
        return Err(Error::Schema(format!(
            "scoring columns [{}] differ from the fitted columns [{}]",
            problem.codes().join(", "),
            model.codes.join(", ")
        )));
    }
    if problem.k() != model.lambda.nrows() {
        return Err(Error::DimensionMismatch {
            what: "mean design columns".into(),
            expected: model.lambda.nrows(),
            got: problem.k(),
        });
    }
    let q = model.q();
    let mut z = problem.y() - problem.mean_design() * &model.lambda;
    for j in 0..q {
        z.column_mut(j).scale_mut(1.0 / model.scale[j]);
    }
    let (inv, _) = spd_inverse_logdet(&model.implied_covariance())
        .map_err(|_| Error::Numerical("implied covariance β'β + Ω is singular".into()))?;
    let scores = z * inv * model.beta.transpose();

    let ss_loadings: Vec<f64> = (0..model.p)
        .map(|i| model.beta.row(i).norm_squared())
        .collect();
    let proportion_var: Vec<f64> = ss_loadings.iter().map(|s| s / q as f64).collect();
    let cumulative_var = proportion_var
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    Ok(FactorScores {
        scores,
        labels: label_factors(model),
        ss_loadings,
        proportion_var,
        cumulative_var,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadingRow {
    pub code: String,
    pub loadings: Vec<f64>,
    /// Loadings with |value| below the cutoff shown as 0.
    pub displayed: Vec<f64>,
    pub uniqueness: f64,
    pub floored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadingsTable {
    pub factors: Vec<String>,
    pub cutoff: f64,
    pub rows: Vec<LoadingRow>,
}

/// Per-variable loadings and uniqueness; loadings smaller in magnitude than
/// `display_cutoff` are displayed as 0.
pub fn loadings_report(model: &FactorModel, display_cutoff: f64) -> LoadingsTable {
    let rows = model
        .codes
        .iter()
        .enumerate()
        .map(|(j, code)| {
            let loadings: Vec<f64> = (0..model.p).map(|i| model.beta[(i, j)]).collect();
            LoadingRow {
                code: code.clone(),
                displayed: loadings
                    .iter()
                    .map(|l| if l.abs() < display_cutoff { 0.0 } else { *l })
                    .collect(),
                loadings,
                uniqueness: model.omega[j],
                floored: model.floored[j],
            }
        })
        .collect();
    LoadingsTable {
        factors: label_factors(model),
        cutoff: display_cutoff,
        rows,
    }
}
