//! Subcommand definitions and their implementations.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use latent_hazard_core::dataset::{summarize, Dataset, Policy, Role};
use latent_hazard_core::factor::{
    fit_rotate_score, loadings_report, max_factors, select_p_with, Criterion, FactorProblem,
    FitOptions,
};
use latent_hazard_core::imputation::{
    average_missing_rate, choose_num_imputations, mice_impute_with, missingness_report,
    MiceOptions, PMM_DONORS,
};
use latent_hazard_core::moral_hazard::{
    run_pipeline_with, FactorSummary, PipelineConfig, PipelineReport, Pooling, ShockDecomposition,
};
use latent_hazard_core::synthetic::{
    gen_factor_data, gen_hazard_data, gen_pipeline_data, productivity_codes, FactorConfig,
    FactorTruth, FixtureConfig, HazardConfig,
};
use latent_hazard_core::Error;
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::io::{self, OutputDir, DEFAULT_NA_TOKENS};
use crate::parallel::PoolRunner;
use crate::report::{self, Table};
use crate::results;
use crate::CliError;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_ITERATIONS: usize = 20;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  configuration error (bad flag values, non-empty output directory, preconditions such as missing cells where complete data is required, unidentifiable factor count)
  2  schema or data-format error (unknown or missing column, unparsable cell)
  3  numerical failure (rank-deficient design, non-convergence, degenerate estimates)
  4  I/O error

Environment:
  LATENT_HAZARD_THREADS  maximum worker threads (default: available cores); results do not depend on it";

#[derive(Debug, Parser)]
#[command(
    name = "latent-hazard",
    version,
    about = "Detects ex-post moral hazard in survey data: multiple imputation, factor scores and two-stage residual inclusion",
    after_help = EXIT_CODES
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Descriptive statistics and missingness of a survey file.
    Summarize(SummarizeArgs),
    /// Multiple imputation by chained equations; writes the completed datasets.
    Impute(ImputeArgs),
    /// Factor-count selection, rotated loadings and scores on complete data.
    Factor(FactorArgs),
    /// Wage equation and two-stage regressions on complete data.
    Hazard(HazardArgs),
    /// The full analysis: missingness, imputation, factors, both stages, pooling.
    Pipeline(PipelineArgs),
    /// Synthetic data with known truth.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with a header row of variable codes.
    #[arg(long)]
    pub input: PathBuf,
    /// TOML schema document (`[[variable]]` tables).
    #[arg(long)]
    pub schema: PathBuf,
    /// Cell values treated as missing.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_NA_TOKENS.map(String::from))]
    pub na: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory [default: latent-hazard-<subcommand>]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Aic,
    Bic,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Criterion {
        match c {
            CriterionArg::Aic => Criterion::Aic,
            CriterionArg::Bic => Criterion::Bic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SubsampleArg {
    All,
    OnSite,
    Hybrid,
    FullyRemote,
}

impl From<SubsampleArg> for Policy {
    fn from(s: SubsampleArg) -> Policy {
        match s {
            SubsampleArg::All => Policy::All,
            SubsampleArg::OnSite => Policy::OnSite,
            SubsampleArg::Hybrid => Policy::Hybrid,
            SubsampleArg::FullyRemote => Policy::FullyRemote,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Rubin,
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full survey-shaped data with per-policy δ and MCAR missingness.
    Fixture,
    /// Covariates, firm value and one productivity outcome.
    Hazard,
    /// Six items from two simple-structure factors.
    Factor,
}

#[derive(Debug, Clone, Args)]
pub struct SummarizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ImputeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Master seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of imputations [default: from the average missing rate]
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iterations: usize,
    /// Donor pool size for predictive mean matching.
    #[arg(long, default_value_t = PMM_DONORS)]
    pub donors: usize,
    /// Impute the pooled sample instead of within policy groups.
    #[arg(long)]
    pub no_stratify: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FactorArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Number of factors [default: selected by the criterion]
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, value_enum, default_value_t = CriterionArg::Bic)]
    pub criterion: CriterionArg,
    /// Loadings smaller in magnitude are displayed as 0.
    #[arg(long, default_value_t = 0.1)]
    pub display_cutoff: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Master seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of factors [default: selected by the criterion]
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, value_enum, default_value_t = CriterionArg::Bic)]
    pub criterion: CriterionArg,
    /// Policy subsamples to estimate, in order.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [SubsampleArg::All, SubsampleArg::OnSite, SubsampleArg::FullyRemote])]
    pub subsample: Vec<SubsampleArg>,
    /// Pairs-bootstrap replicates for the δ standard error.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Significance level of the δ intervals.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Firm-value proxy.
    #[arg(long, default_value = "workteam_npeople")]
    pub firm_value: String,
    /// Wage column [default: the variable with role `wage`]
    #[arg(long)]
    pub wage: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    pub display_cutoff: f64,
}

#[derive(Debug, Clone, Args)]
pub struct HazardArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of imputations [default: from the average missing rate]
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, value_enum, default_value_t = PoolingArg::Rubin)]
    pub pooling: PoolingArg,
    /// Impute the pooled sample instead of within policy groups.
    #[arg(long)]
    pub no_stratify: bool,
    /// Also write every completed dataset.
    #[arg(long)]
    pub keep_imputations: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, value_enum, default_value_t = Preset::Fixture)]
    pub preset: Preset,
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    /// Master seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// MCAR rate of the fixture preset.
    #[arg(long, default_value_t = 0.3)]
    pub missing_rate: f64,
    /// Shock covariance σ_vε of the hazard preset (σ_v² = σ_ε² = 1).
    #[arg(long, default_value_t = 0.5)]
    pub sigma_veps: f64,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                crate::EXIT_CONFIG
            } else {
                0
            };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(out) => {
            eprintln!("wrote {} files to {}", out.files.len(), out.dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Where a subcommand wrote its artifacts.
#[derive(Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn run(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Summarize(a) => cmd_summarize(a),
        Command::Impute(a) => cmd_impute(a),
        Command::Factor(a) => cmd_factor(a),
        Command::Hazard(a) => cmd_hazard(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

struct Loaded {
    dataset: Dataset,
    inputs: Value,
}

fn load(data: &DataArgs) -> Result<Loaded, CliError> {
    let schema_text = io::read_file(&data.schema)?;
    let schema = io::parse_schema(&schema_text).map_err(|e| match e {
        CliError::Schema(m) => CliError::Schema(format!("{}: {m}", data.schema.display())),
        e => e,
    })?;
    let csv_text = io::read_file(&data.input)?;
    let na: Vec<&str> = data.na.iter().map(String::as_str).collect();
    let dataset = io::parse_csv(
        &csv_text,
        schema,
        &na,
        Some(&data.input.display().to_string()),
    )?;
    let inputs = json!({
        "input": {"path": data.input.display().to_string(), "sha256": io::sha256_hex(csv_text.as_bytes())},
        "schema": {"path": data.schema.display().to_string(), "sha256": io::sha256_hex(schema_text.as_bytes())},
        "na": data.na,
    });
    Ok(Loaded { dataset, inputs })
}

fn open_out(out: &OutArgs, command: &str) -> Result<OutputDir, CliError> {
    let dir = out
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("latent-hazard-{command}")));
    OutputDir::create(&dir, out.force)
}

fn echo(command: &str, config: &Value) {
    eprintln!("latent-hazard {command}, resolved configuration:");
    if let Some(obj) = config.as_object() {
        for (k, v) in obj {
            eprintln!("  {k} = {v}");
        }
    }
}

fn write_table(out: &mut OutputDir, t: &Table) -> Result<(), CliError> {
    out.write(&format!("{}.md", t.name), &t.markdown)?;
    out.write(&format!("{}.csv", t.name), &t.csv)
}

/// Writes `manifest.json` last so it can list everything else.
fn finish(
    mut out: OutputDir,
    command: &str,
    config: Value,
    inputs: Value,
    reproduce: String,
    warnings: Vec<String>,
) -> Result<Outcome, CliError> {
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let files = out.written().to_vec();
    let manifest = json!({
        "tool": "latent-hazard",
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": latent_hazard_core::VERSION,
        "command": command,
        "config": config,
        "inputs": inputs,
        "reproduce": reproduce,
        "outputs": files,
        "warnings": warnings,
    });
    out.write("manifest.json", &results::to_pretty(&manifest))?;
    Ok(Outcome {
        dir: out.root().to_path_buf(),
        files: out.written().to_vec(),
        warnings,
    })
}

fn data_flags(d: &DataArgs) -> String {
    format!(
        "--input {} --schema {} --na '{}'",
        d.input.display(),
        d.schema.display(),
        d.na.join(",")
    )
}

fn require_complete(d: &Dataset, codes: &[&str], hint: &str) -> Result<(), CliError> {
    let missing: usize = codes
        .iter()
        .filter_map(|c| d.schema().index_of(c))
        .map(|j| d.missing_count(j))
        .sum();
    if missing > 0 {
        return Err(Error::Precondition(format!(
            "{missing} missing cells in the analysed columns; {hint}"
        ))
        .into());
    }
    Ok(())
}

pub fn cmd_summarize(a: &SummarizeArgs) -> Result<Outcome, CliError> {
    let loaded = load(&a.data)?;
    let config = json!({"command": "summarize"});
    echo("summarize", &config);
    let mut out = open_out(&a.out, "summarize")?;
    let d = &loaded.dataset;
    write_table(&mut out, &report::summary(&summarize(d)))?;
    let covariates: Vec<&str> = d.schema().codes_with_role(Role::Demographic);
    let miss = missingness_report(d, &covariates)?;
    write_table(&mut out, &report::missingness(&miss))?;
    let reproduce = format!("latent-hazard summarize {}", data_flags(&a.data));
    finish(
        out,
        "summarize",
        config,
        loaded.inputs,
        reproduce,
        Vec::new(),
    )
}

pub fn cmd_impute(a: &ImputeArgs) -> Result<Outcome, CliError> {
    let loaded = load(&a.data)?;
    let d = &loaded.dataset;
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let covariates: Vec<&str> = d.schema().codes_with_role(Role::Demographic);
    let miss = missingness_report(d, &covariates)?;
    let m = match a.m {
        Some(0) => return Err(CliError::Config("--m must be at least 1".into())),
        Some(m) => m,
        None => choose_num_imputations(miss.average_rate)?,
    };
    let mut warnings = Vec::new();
    let strata = if a.no_stratify {
        None
    } else {
        let key = latent_hazard_core::dataset::policy_key_index(d.schema()).ok();
        match key {
            Some(k) if d.missing_count(k) == 0 => Some(d.schema().variables()[k].code.clone()),
            Some(k) => {
                warnings.push(format!(
                    "`{}` has missing cells; imputing without policy strata",
                    d.schema().variables()[k].code
                ));
                None
            }
            None => None,
        }
    };
    let config = json!({
        "command": "impute",
        "seed": seed,
        "m": m,
        "iterations": a.iterations,
        "donors": a.donors,
        "strata": strata,
        "average_missing_rate": miss.average_rate,
    });
    echo("impute", &config);
    let mut out = open_out(&a.out, "impute")?;
    let runner = PoolRunner::from_env()?;
    let opts = MiceOptions {
        m,
        iterations: a.iterations,
        seed,
        donors: a.donors,
        strata: strata.clone(),
    };
    let set = mice_impute_with(d, &opts, &runner).map_err(|e| e.in_stage("imputation"))?;
    write_table(&mut out, &report::missingness(&miss))?;
    let width = m.to_string().len().max(2);
    for (i, c) in set.completed.iter().enumerate() {
        out.write(
            &format!("imputations/imputation_{:0width$}.csv", i + 1),
            &io::dataset_to_csv(c, "NA"),
        )?;
    }
    out.write("imputations/traces.csv", &results::traces_csv(&set))?;
    out.write("imputations/schema.toml", &io::schema_to_toml(d.schema()))?;
    let reproduce = format!(
        "latent-hazard impute {} --seed {seed} --m {m} --iterations {} --donors {}{}",
        data_flags(&a.data),
        a.iterations,
        a.donors,
        if a.no_stratify { " --no-stratify" } else { "" }
    );
    finish(out, "impute", config, loaded.inputs, reproduce, warnings)
}

pub fn cmd_factor(a: &FactorArgs) -> Result<Outcome, CliError> {
    let loaded = load(&a.data)?;
    let d = &loaded.dataset;
    let codes: Vec<&str> = d.schema().codes_with_role(Role::ProductivityComponent);
    if codes.is_empty() {
        return Err(CliError::Schema(
            "no variables with role `productivity_component`".into(),
        ));
    }
    require_complete(d, &codes, "run `impute` first or use `pipeline`")?;
    if let Some(p) = a.p {
        let max = max_factors(codes.len());
        if p > max {
            return Err(Error::Identifiability {
                p,
                q: codes.len(),
                max,
            }
            .into());
        }
    }
    if !(a.display_cutoff >= 0.0) {
        return Err(CliError::Config(
            "--display-cutoff must be nonnegative".into(),
        ));
    }
    let criterion: Criterion = a.criterion.into();
    let config = json!({
        "command": "factor",
        "p": a.p,
        "criterion": criterion.name(),
        "display_cutoff": a.display_cutoff,
    });
    echo("factor", &config);
    let mut out = open_out(&a.out, "factor")?;
    let runner = PoolRunner::from_env()?;
    let problem = FactorProblem::from_dataset(d, &codes)?;
    let opts = FitOptions::default();
    let (selection, _) = select_p_with(&problem, criterion, &opts, &runner)
        .map_err(|e| e.in_stage("factor selection"))?;
    let p = a.p.unwrap_or(selection.chosen);
    write_table(&mut out, &report::selection(&selection))?;
    let mut warnings = Vec::new();
    if p == 0 {
        warnings.push("zero factors selected; no loadings or scores written".into());
    } else {
        let (model, scores) =
            fit_rotate_score(&problem, p, &opts).map_err(|e| e.in_stage("factor analysis"))?;
        if !model.converged {
            warnings.push(format!(
                "factor model did not converge in {} iterations",
                model.iterations
            ));
        }
        write_table(
            &mut out,
            &report::factor_summary(&FactorSummary::from(&scores)),
        )?;
        write_table(
            &mut out,
            &report::loadings(&loadings_report(&model, a.display_cutoff)),
        )?;
        out.write("model.txt", &results::model_document(&model))?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&scores.labels).expect("in-memory write");
        for i in 0..scores.scores.nrows() {
            w.write_record(scores.scores.row(i).iter().map(|x| format!("{x}")))
                .expect("in-memory write");
        }
        out.write(
            "scores.csv",
            &String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"),
        )?;
    }
    let reproduce = format!(
        "latent-hazard factor {}{} --criterion {} --display-cutoff {}",
        data_flags(&a.data),
        a.p.map_or(String::new(), |p| format!(" --p {p}")),
        criterion.name(),
        a.display_cutoff
    );
    finish(out, "factor", config, loaded.inputs, reproduce, warnings)
}

fn pipeline_config(model: &ModelArgs) -> PipelineConfig {
    PipelineConfig {
        seed: model.seed.unwrap_or(DEFAULT_SEED),
        criterion: model.criterion.into(),
        fixed_p: model.p,
        subsamples: model.subsample.iter().map(|&s| s.into()).collect(),
        bootstrap: model.bootstrap,
        alpha: model.alpha,
        firm_value: model.firm_value.clone(),
        wage: model.wage.clone(),
        display_cutoff: model.display_cutoff,
        ..PipelineConfig::default()
    }
}

fn config_json(command: &str, c: &PipelineConfig) -> Value {
    json!({
        "command": command,
        "seed": c.seed,
        "m": c.m,
        "iterations": c.iterations,
        "criterion": c.criterion.name(),
        "p": c.fixed_p,
        "subsamples": c.subsamples.iter().map(|p| p.name()).collect::<Vec<_>>(),
        "pooling": c.pooling.name(),
        "bootstrap": c.bootstrap,
        "alpha": c.alpha,
        "firm_value": c.firm_value,
        "wage": c.wage,
        "stratify": c.stratify,
        "display_cutoff": c.display_cutoff,
    })
}

fn model_flags(c: &PipelineConfig) -> String {
    let mut s =
        format!(
        " --seed {} --criterion {} --subsample {} --alpha {} --firm-value {} --display-cutoff {}",
        c.seed,
        c.criterion.name(),
        c.subsamples.iter().map(|p| p.name()).collect::<Vec<_>>().join(","),
        c.alpha,
        c.firm_value,
        c.display_cutoff
    );
    if let Some(p) = c.fixed_p {
        s += &format!(" --p {p}");
    }
    if let Some(b) = c.bootstrap {
        s += &format!(" --bootstrap {b}");
    }
    if let Some(w) = &c.wage {
        s += &format!(" --wage {w}");
    }
    s
}

/// The analysis tables every report carries, in order.
pub fn report_tables(r: &PipelineReport) -> Vec<Table> {
    vec![
        report::missingness(&r.missingness),
        report::selection(&r.selection),
        report::factor_summary(&r.factors),
        report::loadings(&r.loadings),
        report::wage(&r.wage_code, &r.wage),
        report::hazard(r),
        report::deltas(r),
    ]
}

/// A single Markdown document with every table.
pub fn report_document(r: &PipelineReport, tables: &[Table]) -> String {
    let mut s = String::from("# Ex-post moral hazard report\n\n");
    s += &format!(
        "{} rows; {} imputation(s) ({} used, {} pooling); p = {} factors ({}).\n",
        report::grouped(r.n_rows),
        r.m,
        r.m_used,
        r.pooling.name(),
        r.p,
        r.factors.labels.join(", ")
    );
    for w in &r.warnings {
        s += &format!("\n> warning: {w}\n");
    }
    for t in tables {
        s += "\n";
        s += &t.markdown;
    }
    s
}

fn write_report(out: &mut OutputDir, r: &PipelineReport) -> Result<(), CliError> {
    let tables = report_tables(r);
    for t in &tables {
        write_table(out, t)?;
    }
    out.write("report.md", &report_document(r, &tables))?;
    out.write(
        "results.json",
        &results::to_pretty(&results::pipeline_results(r)),
    )?;
    out.write("model.txt", &results::model_document(&r.factor_model))
}

pub fn cmd_hazard(a: &HazardArgs) -> Result<Outcome, CliError> {
    let loaded = load(&a.data)?;
    let d = &loaded.dataset;
    let all: Vec<&str> = d
        .schema()
        .variables()
        .iter()
        .map(|v| v.code.as_str())
        .collect();
    require_complete(d, &all, "run `impute` first or use `pipeline`")?;
    let cfg = PipelineConfig {
        m: Some(1),
        pooling: Pooling::Single,
        stratify: false,
        ..pipeline_config(&a.model)
    };
    let config = config_json("hazard", &cfg);
    echo("hazard", &config);
    let mut out = open_out(&a.out, "hazard")?;
    let runner = PoolRunner::from_env()?;
    let run = run_pipeline_with(d, &cfg, &runner)?;
    write_report(&mut out, &run.report)?;
    let reproduce = format!(
        "latent-hazard hazard {}{}",
        data_flags(&a.data),
        model_flags(&cfg)
    );
    finish(
        out,
        "hazard",
        config,
        loaded.inputs,
        reproduce,
        run.report.warnings.clone(),
    )
}

pub fn cmd_pipeline(a: &PipelineArgs) -> Result<Outcome, CliError> {
    let loaded = load(&a.data)?;
    let d = &loaded.dataset;
    let mut cfg = PipelineConfig {
        m: a.m,
        iterations: a.iterations,
        pooling: match a.pooling {
            PoolingArg::Rubin => Pooling::Rubin,
            PoolingArg::Single => Pooling::Single,
        },
        stratify: !a.no_stratify,
        ..pipeline_config(&a.model)
    };
    if cfg.m.is_none() {
        cfg.m = Some(choose_num_imputations(average_missing_rate(d))?);
    }
    let config = config_json("pipeline", &cfg);
    echo("pipeline", &config);
    let mut out = open_out(&a.out, "pipeline")?;
    let runner = PoolRunner::from_env()?;
    let run = run_pipeline_with(d, &cfg, &runner)?;
    write_report(&mut out, &run.report)?;
    if a.keep_imputations {
        let width = run.imputations.m.to_string().len().max(2);
        for (i, c) in run.imputations.completed.iter().enumerate() {
            out.write(
                &format!("imputations/imputation_{:0width$}.csv", i + 1),
                &io::dataset_to_csv(c, "NA"),
            )?;
        }
        out.write(
            "imputations/traces.csv",
            &results::traces_csv(&run.imputations),
        )?;
    }
    let reproduce = format!(
        "latent-hazard pipeline {}{} --m {} --iterations {} --pooling {}{}{}",
        data_flags(&a.data),
        model_flags(&cfg),
        cfg.m.unwrap_or_default(),
        cfg.iterations,
        cfg.pooling.name(),
        if a.no_stratify { " --no-stratify" } else { "" },
        if a.keep_imputations {
            " --keep-imputations"
        } else {
            ""
        }
    );
    finish(
        out,
        "pipeline",
        config,
        loaded.inputs,
        reproduce,
        run.report.warnings.clone(),
    )
}

/// Two simple-structure factors on the six productivity items.
pub fn factor_preset_truth() -> FactorTruth {
    let beta = DMatrix::from_row_slice(
        2,
        6,
        &[
            0.9, 0.65, 0.0, 0.0, 0.72, 0.0, 0.0, 0.0, 0.85, 0.78, 0.0, 0.35,
        ],
    );
    let omega = (0..6)
        .map(|j| 1.0 - beta.column(j).norm_squared())
        .collect();
    FactorTruth {
        beta,
        omega,
        lambda: vec![0.0; 6],
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<Outcome, CliError> {
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    if a.n == 0 {
        return Err(CliError::Config("--n must be positive".into()));
    }
    let name = a
        .preset
        .to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .to_string();
    let mut config = json!({"command": "synth", "preset": name, "n": a.n, "seed": seed});
    let (data, truth) = match a.preset {
        Preset::Fixture => {
            config["missing_rate"] = json!(a.missing_rate);
            let (d, t) = gen_pipeline_data(&FixtureConfig {
                missing_rate: a.missing_rate,
                ..FixtureConfig::new(a.n, seed)
            })?;
            let mut truth = serde_json::to_value(&t).expect("truth serializes");
            truth["preset"] = json!("fixture");
            (d, truth)
        }
        Preset::Hazard => {
            config["sigma_veps"] = json!(a.sigma_veps);
            let cfg =
                HazardConfig::single(ShockDecomposition::new(1.0, 1.0, a.sigma_veps)?, a.n, seed);
            (gen_hazard_data(&cfg)?, results::hazard_truth(&cfg))
        }
        Preset::Factor => {
            let cfg = FactorConfig {
                n: a.n,
                codes: productivity_codes(),
                truth: factor_preset_truth(),
                seed,
            };
            (
                gen_factor_data(&cfg)?,
                results::factor_truth(&cfg.truth, &cfg.codes),
            )
        }
    };
    echo("synth", &config);
    let mut out = open_out(&a.out, "synth")?;
    out.write("data.csv", &io::dataset_to_csv(&data, "NA"))?;
    out.write("schema.toml", &io::schema_to_toml(data.schema()))?;
    out.write("truth.json", &results::to_pretty(&truth))?;
    let mut reproduce = format!(
        "latent-hazard synth --preset {name} --n {} --seed {seed}",
        a.n
    );
    match a.preset {
        Preset::Fixture => reproduce += &format!(" --missing-rate {}", a.missing_rate),
        Preset::Hazard => reproduce += &format!(" --sigma-veps {}", a.sigma_veps),
        Preset::Factor => {}
    }
    finish(out, "synth", config, json!({}), reproduce, Vec::new())
}
