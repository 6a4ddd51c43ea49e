use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use latent_hazard::io::{load_csv, load_schema, sha256_hex, DEFAULT_NA_TOKENS};
use latent_hazard::{EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_SCHEMA};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_latent-hazard"));
    c.env_remove("LATENT_HAZARD_THREADS");
    c
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn synth(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec!["synth", "--out", out];
    args.extend_from_slice(extra);
    let o = run(dir, &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn help_documents_exit_codes() {
    let o = bin().arg("--help").output().unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for needle in [
        "1  configuration",
        "2  schema",
        "3  numerical",
        "4  I/O",
        "LATENT_HAZARD_THREADS",
    ] {
        assert!(text.contains(needle), "{needle} missing from help");
    }
    for sub in [
        "summarize",
        "impute",
        "factor",
        "hazard",
        "pipeline",
        "synth",
    ] {
        assert!(text.contains(sub));
    }
}

#[test]
fn three_row_fixture_has_one_missing_cell() {
    let schema = load_schema(&fixtures().join("swaa.schema.toml")).unwrap();
    let d = load_csv(
        &fixtures().join("three_rows.csv"),
        schema,
        &DEFAULT_NA_TOKENS,
    )
    .unwrap();
    assert_eq!(d.n_rows(), 3);
    let flagged: usize = d
        .mask()
        .iter()
        .map(|c| c.iter().filter(|&&m| m).count())
        .sum();
    assert_eq!(flagged, 1);
    let j = d.schema().index_of("live_children").unwrap();
    assert!(d.is_missing(1, j));
}

#[test]
fn table_a1_schema_encodes_reference_levels() {
    let schema = load_schema(&fixtures().join("swaa.schema.toml")).unwrap();
    let industry = schema.get("work_industry").unwrap();
    assert_eq!(industry.categories.len(), 18);
    assert_eq!(
        industry.categories[industry.reference_index().unwrap()],
        "Agriculture"
    );
    let race = schema.get("race_ethnicity").unwrap();
    assert_eq!(
        race.categories[race.reference_index().unwrap()],
        "Black or African American"
    );
}

#[test]
fn synth_hazard_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["--preset", "hazard", "--n", "1000", "--seed", "1"];
    synth(tmp.path(), "a", &args);
    synth(tmp.path(), "b", &args);
    let a = files(&tmp.path().join("a"));
    assert_eq!(a, files(&tmp.path().join("b")));
    assert!(
        a.contains_key("data.csv")
            && a.contains_key("truth.json")
            && a.contains_key("manifest.json")
    );
}

#[test]
fn factor_with_too_many_factors_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "s", &["--preset", "factor", "--n", "500"]);
    let o = run(
        tmp.path(),
        &[
            "factor",
            "--input",
            "s/data.csv",
            "--schema",
            "s/schema.toml",
            "--p",
            "4",
            "--out",
            "f",
        ],
    );
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(stderr(&o).contains("identif"), "{}", stderr(&o));
}

#[test]
fn factor_on_complete_data_writes_tables_1_to_3() {
    let tmp = tempfile::tempdir().unwrap();
    synth(
        tmp.path(),
        "s",
        &["--preset", "factor", "--n", "2000", "--seed", "4"],
    );
    let o = run(
        tmp.path(),
        &[
            "factor",
            "--input",
            "s/data.csv",
            "--schema",
            "s/schema.toml",
            "--out",
            "f",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = files(&tmp.path().join("f"));
    for name in [
        "table1_selection.md",
        "table2_factors.csv",
        "table3_loadings.md",
        "model.txt",
        "scores.csv",
    ] {
        assert!(out.contains_key(name), "{name}");
    }
    let t1 = String::from_utf8(out["table1_selection.md"].clone()).unwrap();
    assert!(t1.contains("Selected by BIC: p = 2"), "{t1}");
}

#[test]
fn factor_refuses_incomplete_data() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "s", &["--n", "300"]);
    let o = run(
        tmp.path(),
        &[
            "factor",
            "--input",
            "s/data.csv",
            "--schema",
            "s/schema.toml",
            "--out",
            "f",
        ],
    );
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(stderr(&o).contains("impute"), "{}", stderr(&o));
}

#[test]
fn pipeline_on_fixture_writes_table5_and_echoes_seed() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "s", &["--n", "1500", "--seed", "7"]);
    let data = tmp.path().join("s/data.csv");
    let before = sha256_hex(&fs::read(&data).unwrap());
    let o = run(
        tmp.path(),
        &[
            "pipeline",
            "--input",
            "s/data.csv",
            "--schema",
            "s/schema.toml",
            "--seed",
            "7",
            "--m",
            "4",
            "--out",
            "p",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("seed = 7"));
    assert_eq!(
        sha256_hex(&fs::read(&data).unwrap()),
        before,
        "input mutated"
    );
    let out = files(&tmp.path().join("p"));
    let t5 = String::from_utf8(out["table5_hazard.md"].clone()).unwrap();
    assert!(t5.contains("first_stage_residual"));
    assert!(t5.contains("Stage 2: efficiency (on_site)"));
    let manifest: Value = serde_json::from_slice(&out["manifest.json"]).unwrap();
    assert_eq!(manifest["config"]["seed"], 7);
    assert_eq!(manifest["inputs"]["input"]["sha256"], before.as_str());
    let results: Value = serde_json::from_slice(&out["results.json"]).unwrap();
    assert_eq!(results["stage2"].as_array().unwrap().len(), 6);
}

#[test]
fn default_seed_is_resolved_and_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["synth", "--preset", "factor", "--n", "50"]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("seed = 1"));
    let m: Value = serde_json::from_slice(
        &fs::read(tmp.path().join("latent-hazard-synth/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["config"]["seed"], 1);
    assert!(m["reproduce"].as_str().unwrap().contains("--seed 1"));
}

#[test]
fn manifest_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "s", &["--n", "800", "--seed", "3"]);
    let o = run(
        tmp.path(),
        &[
            "pipeline",
            "--input",
            "s/data.csv",
            "--schema",
            "s/schema.toml",
            "--m",
            "3",
            "--iterations",
            "5",
            "--out",
            "p1",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest: Value =
        serde_json::from_slice(&fs::read(tmp.path().join("p1/manifest.json")).unwrap()).unwrap();
    let line = manifest["reproduce"].as_str().unwrap();
    let cmd = line.replacen("latent-hazard", env!("CARGO_BIN_EXE_latent-hazard"), 1) + " --out p2";
    let o = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .current_dir(tmp.path())
        .env_remove("LATENT_HAZARD_THREADS")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut a = files(&tmp.path().join("p1"));
    let mut b = files(&tmp.path().join("p2"));
    let ma: Value = serde_json::from_slice(&a.remove("manifest.json").unwrap()).unwrap();
    let mb: Value = serde_json::from_slice(&b.remove("manifest.json").unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(ma["config"], mb["config"]);
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "s", &["--n", "600", "--seed", "5"]);
    let mut outs = Vec::new();
    for (threads, out) in [("1", "t1"), ("3", "t3")] {
        let o = bin()
            .current_dir(tmp.path())
            .env("LATENT_HAZARD_THREADS", threads)
            .args([
                "pipeline",
                "--input",
                "s/data.csv",
                "--schema",
                "s/schema.toml",
                "--m",
                "3",
            ])
            .args(["--iterations", "4", "--out", out])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        outs.push(files(&tmp.path().join(out)));
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn invalid_thread_variable_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "s", &["--preset", "factor", "--n", "200"]);
    let o = bin()
        .current_dir(tmp.path())
        .env("LATENT_HAZARD_THREADS", "zero")
        .args([
            "factor",
            "--input",
            "s/data.csv",
            "--schema",
            "s/schema.toml",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), EXIT_CONFIG);
}

#[test]
fn hazard_on_complete_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "s", &["--n", "1200", "--missing-rate", "0"]);
    let o = run(
        tmp.path(),
        &[
            "hazard",
            "--input",
            "s/data.csv",
            "--schema",
            "s/schema.toml",
            "--subsample",
            "all,hybrid",
            "--out",
            "h",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t5 = fs::read_to_string(tmp.path().join("h/table5_hazard.md")).unwrap();
    assert!(t5.contains("(hybrid)") && !t5.contains("(on_site)"));
}

#[test]
fn impute_writes_completed_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "s", &["--n", "300", "--seed", "2"]);
    let o = run(
        tmp.path(),
        &[
            "impute",
            "--input",
            "s/data.csv",
            "--schema",
            "s/schema.toml",
            "--m",
            "2",
            "--iterations",
            "3",
            "--out",
            "i",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let schema = load_schema(&tmp.path().join("s/schema.toml")).unwrap();
    for k in ["01", "02"] {
        let d = load_csv(
            &tmp.path().join(format!("i/imputations/imputation_{k}.csv")),
            schema.clone(),
            &["NA"],
        )
        .unwrap();
        assert!(d.is_complete());
        assert_eq!(d.n_rows(), 300);
    }
    assert!(tmp.path().join("i/imputations/traces.csv").exists());
}

#[test]
fn output_directory_needs_force_to_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["synth", "--preset", "factor", "--n", "50", "--out", "o"];
    assert_eq!(code(&run(tmp.path(), &args)), 0);
    let o = run(tmp.path(), &args);
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(stderr(&o).contains("--force"), "{}", stderr(&o));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&run(tmp.path(), &forced)), 0);
}

#[test]
fn schema_problems_exit_with_schema_code() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "s", &["--preset", "factor", "--n", "20"]);
    let text = fs::read_to_string(tmp.path().join("s/data.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[0] = lines[0].replacen("wfh_expect_quant", "wfh_expected", 1);
    fs::write(tmp.path().join("renamed.csv"), lines.join("\n")).unwrap();
    let o = run(
        tmp.path(),
        &[
            "summarize",
            "--input",
            "renamed.csv",
            "--schema",
            "s/schema.toml",
        ],
    );
    assert_eq!(code(&o), EXIT_SCHEMA);
    assert!(stderr(&o).contains("wfh_expect"), "{}", stderr(&o));

    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<&str> = lines[3].split(',').collect();
    cells[1] = "abc";
    lines[3] = cells.join(",");
    fs::write(tmp.path().join("bad.csv"), lines.join("\n")).unwrap();
    let o = run(
        tmp.path(),
        &[
            "summarize",
            "--input",
            "bad.csv",
            "--schema",
            "s/schema.toml",
        ],
    );
    assert_eq!(code(&o), EXIT_SCHEMA);
}

#[test]
fn missing_input_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        tmp.path(),
        &[
            "summarize",
            "--input",
            "nope.csv",
            "--schema",
            fixtures().join("swaa.schema.toml").to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), EXIT_IO);
}

#[test]
fn bad_flag_values_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["synth", "--preset", "nonsense"]);
    assert_eq!(code(&o), EXIT_CONFIG);
    synth(tmp.path(), "s", &["--n", "200"]);
    let o = run(
        tmp.path(),
        &[
            "pipeline",
            "--input",
            "s/data.csv",
            "--schema",
            "s/schema.toml",
            "--alpha",
            "1.5",
            "--out",
            "p",
        ],
    );
    assert_eq!(code(&o), EXIT_CONFIG, "{}", stderr(&o));
}

#[test]
fn degenerate_regressions_exit_with_numerical_code() {
    let tmp = tempfile::tempdir().unwrap();
    synth(
        tmp.path(),
        "s",
        &["--n", "40", "--missing-rate", "0", "--seed", "9"],
    );
    // two identical regressors make the design rank deficient
    let text = fs::read_to_string(tmp.path().join("s/data.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let a = header
        .iter()
        .position(|&c| c == "commutetime_quant")
        .unwrap();
    let b = header.iter().position(|&c| c == "age_quant").unwrap();
    let mut out = vec![header.join(",")];
    for l in lines {
        let mut cells: Vec<&str> = l.split(',').collect();
        cells[a] = cells[b];
        out.push(cells.join(","));
    }
    fs::write(tmp.path().join("collinear.csv"), out.join("\n")).unwrap();
    let o = run(
        tmp.path(),
        &[
            "hazard",
            "--input",
            "collinear.csv",
            "--schema",
            "s/schema.toml",
            "--subsample",
            "all",
            "--out",
            "h",
        ],
    );
    assert_eq!(code(&o), EXIT_NUMERICAL, "{}", stderr(&o));
    assert!(
        stderr(&o).contains("imputation 1") || stderr(&o).contains("stage"),
        "{}",
        stderr(&o)
    );
}
