//! Machine-readable documents: results, fitted models and synthetic truth.

use latent_hazard_core::factor::FactorModel;
use latent_hazard_core::imputation::{ImputationSet, PooledEstimate};
use latent_hazard_core::moral_hazard::{PipelineReport, PooledRegression};
use latent_hazard_core::synthetic::{FactorTruth, HazardConfig};
use nalgebra::DMatrix;
use serde_json::{json, Value};

fn pooled(e: &PooledEstimate) -> Value {
    json!({
        "estimate": e.estimate,
        "std_error": e.std_error(),
        "p_value": e.p_value(),
        "within_var": e.within_var,
        "between_var": e.between_var,
        "total_var": e.total_var,
        "df": if e.df.is_finite() { json!(e.df) } else { json!("inf") },
        "imputations": e.m,
    })
}

fn regression(r: &PooledRegression) -> Value {
    json!({
        "coefficients": r.coefficients.iter().map(|c| json!({"term": c.name, "estimate": pooled(&c.estimate)})).collect::<Vec<_>>(),
        "n": r.n,
        "df_residual": r.df_residual,
        "residual_std_error": r.residual_std_error,
        "r_squared": r.r_squared,
        "adjusted_r_squared": r.adjusted_r_squared,
        "f_statistic": r.f_statistic.map(|(f, d1, d2)| json!({"value": f, "df1": d1, "df2": d2})),
        "f_p_value": r.f_p_value,
        "imputations": r.m,
    })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Every pooled and per-imputation δ̂ with the tables behind them.
pub fn pipeline_results(r: &PipelineReport) -> Value {
    json!({
        "n_rows": r.n_rows,
        "imputations": r.m,
        "imputations_used": r.m_used,
        "iterations": r.iterations,
        "seed": r.seed,
        "pooling": r.pooling.name(),
        "strata": r.strata,
        "alpha": r.alpha,
        "missingness": {
            "average_rate": r.missingness.average_rate,
            "variables": r.missingness.variables.iter().map(|v| json!({"code": v.code, "missing": v.missing, "rate": v.rate})).collect::<Vec<_>>(),
            "little": r.missingness.little.as_ref().map(|t| json!({
                "statistic": t.statistic, "df": t.df, "p_value": t.p_value, "patterns": t.patterns, "n_used": t.n_used,
            })),
            "little_note": r.missingness.little_note,
        },
        "selection": {
            "criterion": r.selection.criterion.name(),
            "chosen": r.selection.chosen,
            "entries": r.selection.entries.iter().map(|e| json!({
                "p": e.p, "d_p": e.d_p, "deviance": e.deviance, "aic": e.aic, "bic": e.bic, "converged": e.converged,
            })).collect::<Vec<_>>(),
        },
        "p": r.p,
        "factors": {
            "labels": r.factors.labels,
            "ss_loadings": r.factors.ss_loadings,
            "proportion_var": r.factors.proportion_var,
            "cumulative_var": r.factors.cumulative_var,
            "loadings": r.loadings.rows.iter().map(|l| json!({
                "variable": l.code, "loadings": l.loadings, "uniqueness": l.uniqueness, "floored": l.floored,
            })).collect::<Vec<_>>(),
        },
        "wage": { "outcome": r.wage_code, "regression": regression(&r.wage) },
        "stage1": r.stage1.iter().map(|(p, reg)| json!({
            "subsample": p.name(), "outcome": r.firm_value_code, "regression": regression(reg),
        })).collect::<Vec<_>>(),
        "stage2": r.stage2.iter().map(|d| json!({
            "subsample": d.subsample.name(),
            "outcome": d.productivity,
            "delta": pooled(&d.delta),
            "interval": [d.interval.0, d.interval.1],
            "significant": d.significant,
            "n": d.n,
            "bootstrap_se": d.bootstrap_se,
            "regression": regression(&d.regression),
        })).collect::<Vec<_>>(),
        "deltas": r.deltas.iter().map(|d| json!({
            "imputation": d.imputation,
            "subsample": d.subsample.name(),
            "outcome": d.productivity,
            "delta": d.delta,
            "std_error": d.std_error,
            "p_value": d.p_value,
            "n": d.n,
            "bootstrap_se": d.bootstrap_se,
        })).collect::<Vec<_>>(),
        "warnings": r.warnings,
    })
}

/// Plain-text record of a fitted factor model. Matrices are written one row
/// per line with shortest round-trip numbers.
pub fn model_document(m: &FactorModel) -> String {
    let line = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut s = String::from("# latent-hazard factor model\n");
    s += &format!("p {}\nq {}\nn {}\nv {}\n", m.p, m.q(), m.n, m.v);
    s += &format!("standardization correlation\ncodes {}\n", m.codes.join(" "));
    s += &format!("scale {}\n", line(&m.scale));
    s += &format!("deviance {}\nloglik {}\n", m.deviance, m.loglik);
    s += &format!("converged {}\niterations {}\n", m.converged, m.iterations);
    s += &format!(
        "floored {}\n",
        m.floored
            .iter()
            .map(|f| f.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    s += &format!("uniqueness {}\n", line(&m.omega));
    s += &format!("beta {}x{}\n", m.beta.nrows(), m.beta.ncols());
    for r in rows(&m.beta) {
        s += &format!("{}\n", line(&r));
    }
    s += &format!("lambda {}x{}\n", m.lambda.nrows(), m.lambda.ncols());
    for r in rows(&m.lambda) {
        s += &format!("{}\n", line(&r));
    }
    s += &format!("rotation {}x{}\n", m.rotation.nrows(), m.rotation.ncols());
    for r in rows(&m.rotation) {
        s += &format!("{}\n", line(&r));
    }
    s
}

/// Per-variable imputation chain means, long format.
pub fn traces_csv(set: &ImputationSet) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "variable",
        "engine",
        "missing",
        "imputation",
        "iteration",
        "mean",
    ])
    .expect("in-memory write");
    for t in &set.traces {
        for (i, chain) in t.means.iter().enumerate() {
            for (it, m) in chain.iter().enumerate() {
                w.write_record([
                    t.code.clone(),
                    t.engine.name().to_string(),
                    t.missing.to_string(),
                    (i + 1).to_string(),
                    (it + 1).to_string(),
                    format!("{m}"),
                ])
                .expect("in-memory write");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

pub fn factor_truth(t: &FactorTruth, codes: &[String]) -> Value {
    json!({
        "preset": "factor",
        "codes": codes,
        "beta": rows(&t.beta),
        "omega": t.omega,
        "lambda": t.lambda,
        "covariance": rows(&t.covariance()),
    })
}

pub fn hazard_truth(cfg: &HazardConfig) -> Value {
    json!({
        "preset": "hazard",
        "n": cfg.n,
        "seed": cfg.seed,
        "theta": cfg.theta,
        "rho": cfg.rho,
        "groups": cfg.groups.iter().map(|g| json!({
            "policy": g.policy.name(),
            "share": g.share,
            "sigma_v2": g.shock.sigma_v2(),
            "sigma_eps2": g.shock.sigma_eps2(),
            "sigma_veps": g.shock.sigma_veps(),
            "delta": g.shock.delta(),
        })).collect::<Vec<_>>(),
    })
}

pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}
