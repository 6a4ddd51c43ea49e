//! Markdown and CSV renderings of the analysis tables.
//!
//! Markdown cells show an estimate with three decimals, significance stars
//! and the standard error in parentheses. CSV files are long-format and keep
//! full precision.

use latent_hazard_core::dataset::DatasetSummary;
use latent_hazard_core::factor::{LoadingsTable, SelectionTable};
use latent_hazard_core::imputation::{MissingnessReport, PooledEstimate};
use latent_hazard_core::moral_hazard::{
    FactorSummary, PipelineReport, PooledRegression, RESIDUAL_COLUMN,
};
use latent_hazard_core::stars;

/// One rendered table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub title: String,
    pub markdown: String,
    pub csv: String,
}

pub fn markdown(title: &str, header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = format!("## {title}\n\n");
    s += &format!("| {} |\n", header.join(" | "));
    s += &format!("|{}\n", " --- |".repeat(header.len()));
    for r in rows {
        s += &format!("| {} |\n", r.join(" | "));
    }
    s
}

pub fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

/// Integer with thousands separators.
pub fn grouped(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Four significant digits, at most three decimals beyond them for small
/// values.
pub fn sig4(x: f64) -> String {
    if !x.is_finite() {
        return "NA".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (3 - mag).clamp(0, 6) as usize;
    format!("{x:.decimals$}")
}

pub fn f3(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.3}")
    } else {
        "NA".into()
    }
}

pub fn cell(estimate: f64, std_error: f64, p: f64) -> String {
    format!("{}{} ({})", f3(estimate), stars(p), f3(std_error))
}

pub fn pooled_cell(e: &PooledEstimate) -> String {
    cell(e.estimate, e.std_error(), e.p_value())
}

fn full(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "NA".into()
    }
}

fn fit_rows(fits: &[&PooledRegression]) -> Vec<Vec<String>> {
    let rse = fits
        .iter()
        .map(|f| {
            format!(
                "{} ({})",
                sig4(f.residual_std_error),
                grouped(f.df_residual)
            )
        })
        .collect();
    let r2 = fits
        .iter()
        .map(|f| format!("{} ({})", f3(f.r_squared), f3(f.adjusted_r_squared)))
        .collect();
    let f_stat = fits
        .iter()
        .map(|f| match (f.f_statistic, f.f_p_value) {
            (Some((v, d1, d2)), Some(p)) => {
                format!("{}{} ({}, {})", sig4(v), stars(p), d1, grouped(d2))
            }
            _ => "NA".into(),
        })
        .collect();
    let n = fits.iter().map(|f| grouped(f.n)).collect();
    let mut out: Vec<Vec<String>> = Vec::new();
    for (label, cells) in [
        ("Residual standard error (df)", rse),
        ("R-squared (adjusted)", r2),
        ("F-statistic (df)", f_stat),
        ("Observations", n),
    ] {
        let mut row = vec![label.to_string()];
        row.extend::<Vec<String>>(cells);
        out.push(row);
    }
    out
}

fn fit_csv_rows(prefix: &[String], f: &PooledRegression) -> Vec<Vec<String>> {
    let (fv, d1, d2, fp) = match (f.f_statistic, f.f_p_value) {
        (Some((v, a, b)), Some(p)) => (full(v), a.to_string(), b.to_string(), full(p)),
        _ => ("NA".into(), "NA".into(), "NA".into(), "NA".into()),
    };
    [
        ("residual_std_error", full(f.residual_std_error)),
        ("df_residual", f.df_residual.to_string()),
        ("r_squared", full(f.r_squared)),
        ("adjusted_r_squared", full(f.adjusted_r_squared)),
        ("f_statistic", fv),
        ("f_df1", d1),
        ("f_df2", d2),
        ("f_p_value", fp),
        ("n", f.n.to_string()),
        ("imputations", f.m.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| {
        let mut r = prefix.to_vec();
        r.extend([
            "fit".into(),
            k.into(),
            v,
            String::new(),
            String::new(),
            String::new(),
        ]);
        r
    })
    .collect()
}

fn coef_csv_rows(prefix: &[String], f: &PooledRegression) -> Vec<Vec<String>> {
    f.coefficients
        .iter()
        .map(|c| {
            let e = &c.estimate;
            let mut r = prefix.to_vec();
            r.extend([
                "coefficient".into(),
                c.name.clone(),
                full(e.estimate),
                full(e.std_error()),
                full(e.p_value()),
                stars(e.p_value()).into(),
            ]);
            r
        })
        .collect()
}

/// Information criteria by number of factors.
pub fn selection(t: &SelectionTable) -> Table {
    let mut header = vec!["".to_string()];
    header.extend(t.entries.iter().map(|e| format!("p = {}", e.p)));
    let row = |label: &str, f: &dyn Fn(&latent_hazard_core::factor::SelectionEntry) -> String| {
        let mut r = vec![label.to_string()];
        r.extend(t.entries.iter().map(f));
        r
    };
    let rows = vec![
        row("Free parameters", &|e| e.d_p.to_string()),
        row("Deviance", &|e| format!("{:.1}", e.deviance + 0.0)),
        row("AIC", &|e| format!("{:.1}", e.aic + 0.0)),
        row("BIC", &|e| format!("{:.1}", e.bic + 0.0)),
        row("Converged", &|e| {
            if e.converged {
                "yes".into()
            } else {
                "no".into()
            }
        }),
    ];
    let title = "Table 1. AIC and BIC by number of factors";
    let mut md = markdown(title, &header, &rows);
    md += &format!(
        "\nSelected by {}: p = {}\n",
        t.criterion.name().to_uppercase(),
        t.chosen
    );
    let csv_rows: Vec<Vec<String>> = t
        .entries
        .iter()
        .map(|e| {
            vec![
                e.p.to_string(),
                e.d_p.to_string(),
                full(e.deviance),
                full(e.aic),
                full(e.bic),
                e.converged.to_string(),
                (e.p == t.chosen).to_string(),
            ]
        })
        .collect();
    Table {
        name: "table1_selection",
        title: title.into(),
        markdown: md,
        csv: csv(
            &["p", "d_p", "deviance", "aic", "bic", "converged", "chosen"],
            &csv_rows,
        ),
    }
}

/// Variance explained by each rotated factor.
pub fn factor_summary(s: &FactorSummary) -> Table {
    let mut header = vec!["".to_string()];
    header.extend(s.labels.iter().cloned());
    let row = |label: &str, v: &[f64]| {
        let mut r = vec![label.to_string()];
        r.extend(v.iter().map(|x| f3(*x)));
        r
    };
    let rows = vec![
        row("SS loadings", &s.ss_loadings),
        row("Proportion Var", &s.proportion_var),
        row("Cumulative Var", &s.cumulative_var),
    ];
    let title = "Table 2. Factor analysis results";
    let csv_rows: Vec<Vec<String>> = s
        .labels
        .iter()
        .enumerate()
        .map(|(k, l)| {
            vec![
                l.clone(),
                full(s.ss_loadings[k]),
                full(s.proportion_var[k]),
                full(s.cumulative_var[k]),
            ]
        })
        .collect();
    Table {
        name: "table2_factors",
        title: title.into(),
        markdown: markdown(title, &header, &rows),
        csv: csv(
            &["factor", "ss_loadings", "proportion_var", "cumulative_var"],
            &csv_rows,
        ),
    }
}

/// Rotated loadings and uniquenesses.
pub fn loadings(t: &LoadingsTable) -> Table {
    let mut header = vec!["Variable".to_string()];
    header.extend(t.factors.iter().cloned());
    header.push("Uniqueness".into());
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.code.clone()];
            row.extend(
                r.displayed
                    .iter()
                    .map(|&x| if x == 0.0 { "0".into() } else { f3(x) }),
            );
            row.push(format!(
                "{}{}",
                f3(r.uniqueness),
                if r.floored { " (floor)" } else { "" }
            ));
            row
        })
        .collect();
    let title = "Table 3. Factor loadings";
    let mut md = markdown(title, &header, &rows);
    md += &format!(
        "\nLoadings below {} in magnitude are shown as 0.\n",
        t.cutoff
    );
    let mut csv_rows = Vec::new();
    for r in &t.rows {
        for (k, f) in t.factors.iter().enumerate() {
            csv_rows.push(vec![
                r.code.clone(),
                f.clone(),
                full(r.loadings[k]),
                full(r.displayed[k]),
                full(r.uniqueness),
                r.floored.to_string(),
            ]);
        }
    }
    Table {
        name: "table3_loadings",
        title: title.into(),
        markdown: md,
        csv: csv(
            &[
                "variable",
                "factor",
                "loading",
                "displayed",
                "uniqueness",
                "floored",
            ],
            &csv_rows,
        ),
    }
}

/// Wage on the predicted factor scores.
pub fn wage(outcome: &str, reg: &PooledRegression) -> Table {
    let header = vec!["Variable".to_string(), "Estimate (Std. Error)".to_string()];
    let mut rows: Vec<Vec<String>> = reg
        .coefficients
        .iter()
        .map(|c| vec![c.name.clone(), pooled_cell(&c.estimate)])
        .collect();
    rows.extend(fit_rows(&[reg]));
    let title = format!("Table 4. Wage equation ({outcome})");
    let prefix = vec![outcome.to_string()];
    let mut csv_rows = coef_csv_rows(&prefix, reg);
    csv_rows.extend(fit_csv_rows(&prefix, reg));
    Table {
        name: "table4_wage",
        markdown: markdown(&title, &header, &rows),
        title,
        csv: csv(
            &[
                "outcome",
                "kind",
                "term",
                "estimate",
                "std_error",
                "p_value",
                "stars",
            ],
            &csv_rows,
        ),
    }
}

/// Stage 1 and stage 2 regressions side by side, one column per subsample
/// and outcome.
pub fn hazard(r: &PipelineReport) -> Table {
    let mut cols: Vec<(String, String, String, &PooledRegression)> = Vec::new();
    for (policy, reg) in &r.stage1 {
        cols.push((
            "1".into(),
            r.firm_value_code.clone(),
            policy.name().into(),
            reg,
        ));
    }
    for label in &r.factors.labels {
        for s in r.stage2.iter().filter(|s| &s.productivity == label) {
            cols.push((
                "2".into(),
                label.clone(),
                s.subsample.name().into(),
                &s.regression,
            ));
        }
    }
    let mut terms: Vec<String> = Vec::new();
    for (_, _, _, reg) in &cols {
        for c in &reg.coefficients {
            if !terms.contains(&c.name) {
                terms.push(c.name.clone());
            }
        }
    }
    if let Some(i) = terms.iter().position(|t| t == RESIDUAL_COLUMN) {
        let t = terms.remove(i);
        terms.insert(1.min(terms.len()), t);
    }
    let mut header = vec!["Term".to_string()];
    header.extend(
        cols.iter()
            .map(|(stage, outcome, sub, _)| format!("Stage {stage}: {outcome} ({sub})")),
    );
    let mut rows: Vec<Vec<String>> = terms
        .iter()
        .map(|t| {
            let mut row = vec![t.clone()];
            row.extend(
                cols.iter()
                    .map(|(_, _, _, reg)| reg.get(t).map_or("NA".into(), pooled_cell)),
            );
            row
        })
        .collect();
    let regs: Vec<&PooledRegression> = cols.iter().map(|c| c.3).collect();
    rows.extend(fit_rows(&regs));
    let title = "Table 5. Two-stage regressions: firm value and productivity";
    let mut md = markdown(title, &header, &rows);
    md += &format!(
        "\nCoefficient on `{RESIDUAL_COLUMN}` is the moral-hazard coefficient δ. {} Significance: *** p<0.01, ** p<0.05, * p<0.1.\n",
        match r.m_used {
            1 => "Estimates from a single completed dataset.".to_string(),
            m => format!("Estimates pooled over {m} imputations by Rubin's rules."),
        }
    );
    let mut csv_rows = Vec::new();
    for (stage, outcome, sub, reg) in &cols {
        let prefix = vec![stage.clone(), outcome.clone(), sub.clone()];
        csv_rows.extend(coef_csv_rows(&prefix, reg));
        csv_rows.extend(fit_csv_rows(&prefix, reg));
    }
    Table {
        name: "table5_hazard",
        title: title.into(),
        markdown: md,
        csv: csv(
            &[
                "stage",
                "outcome",
                "subsample",
                "kind",
                "term",
                "estimate",
                "std_error",
                "p_value",
                "stars",
            ],
            &csv_rows,
        ),
    }
}

/// δ̂ per subsample and factor with its interval.
pub fn deltas(r: &PipelineReport) -> Table {
    let level = format!("{}%", (1e4 * 100.0 * (1.0 - r.alpha)).round() / 1e4);
    let header: Vec<String> = [
        "Subsample".to_string(),
        "Factor".into(),
        "δ (Std. Error)".into(),
        format!("{level} interval"),
        "FMI".into(),
        "n".into(),
    ]
    .into();
    let rows: Vec<Vec<String>> = r
        .stage2
        .iter()
        .map(|d| {
            vec![
                d.subsample.name().into(),
                d.productivity.clone(),
                pooled_cell(&d.delta),
                format!("[{}, {}]", f3(d.interval.0), f3(d.interval.1)),
                f3(d.delta.missing_information()),
                grouped(d.n),
            ]
        })
        .collect();
    let title = "Moral-hazard coefficients";
    let csv_rows: Vec<Vec<String>> = r
        .stage2
        .iter()
        .map(|d| {
            vec![
                d.subsample.name().into(),
                d.productivity.clone(),
                full(d.delta.estimate),
                full(d.delta.std_error()),
                full(d.delta.p_value()),
                full(d.interval.0),
                full(d.interval.1),
                full(d.delta.within_var),
                full(d.delta.between_var),
                full(d.delta.df),
                d.significant.to_string(),
                d.n.to_string(),
                d.delta.m.to_string(),
                d.bootstrap_se.map_or("NA".into(), full),
            ]
        })
        .collect();
    Table {
        name: "deltas",
        title: title.into(),
        markdown: markdown(title, &header, &rows),
        csv: csv(
            &[
                "subsample",
                "factor",
                "delta",
                "std_error",
                "p_value",
                "lower",
                "upper",
                "within_var",
                "between_var",
                "df",
                "significant",
                "n",
                "imputations",
                "bootstrap_se",
            ],
            &csv_rows,
        ),
    }
}

/// Missing rates, Little's test and the MAR diagnostics.
pub fn missingness(m: &MissingnessReport) -> Table {
    let header = vec!["Variable".to_string(), "Missing".into(), "Rate".into()];
    let rows: Vec<Vec<String>> = m
        .variables
        .iter()
        .map(|v| vec![v.code.clone(), grouped(v.missing), f3(v.rate)])
        .collect();
    let title = "Missing values";
    let mut md = markdown(title, &header, &rows);
    md += &format!("\nAverage missing rate: {:.2}%\n", 100.0 * m.average_rate);
    match (&m.little, &m.little_note) {
        (Some(t), _) => {
            md += &format!(
                "\nLittle's MCAR test: χ² = {:.2}, df = {}, p = {:.4} ({} patterns, {} rows)\n",
                t.statistic,
                grouped(t.df),
                t.p_value,
                t.patterns,
                grouped(t.n_used)
            )
        }
        (None, Some(note)) => md += &format!("\nLittle's MCAR test not computed: {note}\n"),
        (None, None) => {}
    }
    if !m.mar.is_empty() {
        let mut worst: Vec<_> = m.mar.iter().collect();
        worst.sort_by(|a, b| b.tv_distance.total_cmp(&a.tv_distance));
        md += "\nLargest covariate shifts between missing and observed rows (total-variation distance):\n\n";
        md += "| Target | Covariate | Missing | Observed | TV distance |\n| --- | --- | --- | --- | --- |\n";
        for d in worst.iter().take(10) {
            md += &format!(
                "| {} | {} | {} | {} | {} |\n",
                d.target,
                d.covariate,
                grouped(d.n_missing),
                grouped(d.n_observed),
                f3(d.tv_distance)
            );
        }
    }
    let mut csv_rows: Vec<Vec<String>> = m
        .variables
        .iter()
        .map(|v| vec![v.code.clone(), v.missing.to_string(), full(v.rate)])
        .collect();
    csv_rows.push(vec!["average".into(), String::new(), full(m.average_rate)]);
    Table {
        name: "missingness",
        title: title.into(),
        markdown: md,
        csv: csv(&["variable", "missing", "rate"], &csv_rows),
    }
}

/// Descriptive statistics over observed cells.
pub fn summary(s: &DatasetSummary) -> Table {
    let title = "Summary of data";
    let mut md = format!("## {title}\n\nObservations: {}\n\n", grouped(s.n_rows));
    let c_rows: Vec<Vec<String>> = s
        .continuous
        .iter()
        .map(|c| {
            vec![
                c.code.clone(),
                grouped(c.n),
                format!("{:.2}", c.mean),
                format!("{:.2}", c.sd),
                format!("{:.2}", c.min),
                format!("{:.2}", c.max),
            ]
        })
        .collect();
    let header: Vec<String> = ["Variable", "n", "Mean", "St.dev", "Min", "Max"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    md += &markdown("Continuous variables", &header, &c_rows).replacen("## ", "### ", 1);
    md += "\n";
    let mut k_rows = Vec::new();
    for c in &s.categorical {
        for (i, l) in c.levels.iter().enumerate() {
            k_rows.push(vec![
                if i == 0 {
                    c.code.clone()
                } else {
                    String::new()
                },
                l.label.clone(),
                grouped(l.frequency),
                f3(l.percent),
                f3(l.cumulative),
            ]);
        }
    }
    let header: Vec<String> = ["Variable", "Level", "Freq.", "Percent", "Cum."]
        .iter()
        .map(|s| s.to_string())
        .collect();
    md += &markdown("Categorical variables", &header, &k_rows).replacen("## ", "### ", 1);
    let mut csv_rows = Vec::new();
    for c in &s.continuous {
        for (stat, v) in [
            ("mean", c.mean),
            ("sd", c.sd),
            ("min", c.min),
            ("max", c.max),
        ] {
            csv_rows.push(vec![
                c.code.clone(),
                stat.into(),
                String::new(),
                full(v),
                c.n.to_string(),
            ]);
        }
    }
    for c in &s.categorical {
        for l in &c.levels {
            csv_rows.push(vec![
                c.code.clone(),
                "frequency".into(),
                l.label.clone(),
                l.frequency.to_string(),
                c.n.to_string(),
            ]);
            csv_rows.push(vec![
                c.code.clone(),
                "percent".into(),
                l.label.clone(),
                full(l.percent),
                c.n.to_string(),
            ]);
        }
    }
    Table {
        name: "summary",
        title: title.into(),
        markdown: md,
        csv: csv(&["variable", "statistic", "level", "value", "n"], &csv_rows),
    }
}
