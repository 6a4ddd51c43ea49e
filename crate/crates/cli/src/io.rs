//! Schema documents, CSV tables and output directories.

use std::fs;
use std::path::{Path, PathBuf};

use latent_hazard_core::{Dataset, Schema, VariableSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DEFAULT_NA_TOKENS: [&str; 2] = ["", "NA"];

#[derive(Deserialize)]
struct SchemaDocument {
    variable: Schema,
}

#[derive(Serialize)]
struct SchemaDocumentRef<'a> {
    variable: &'a [VariableSpec],
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Parses a schema document: a TOML array of `[[variable]]` tables with
/// `code`, `kind`, `role` and, for categoricals, `categories` and `reference`.
pub fn parse_schema(text: &str) -> Result<Schema, CliError> {
    let doc: SchemaDocument =
        toml::from_str(text).map_err(|e| CliError::Schema(format!("schema document: {e}")))?;
    Ok(doc.variable)
}

pub fn load_schema(path: &Path) -> Result<Schema, CliError> {
    parse_schema(&read_file(path)?).map_err(|e| match e {
        CliError::Schema(m) => CliError::Schema(format!("{}: {m}", path.display())),
        e => e,
    })
}

pub fn schema_to_toml(schema: &Schema) -> String {
    toml::to_string(&SchemaDocumentRef {
        variable: schema.variables(),
    })
    .expect("schema serializes")
}

/// Reads a header-first CSV into a dataset. Cells equal to one of
/// `na_tokens` (after trimming) are missing.
pub fn parse_csv(
    text: &str,
    schema: Schema,
    na_tokens: &[&str],
    source: Option<&str>,
) -> Result<Dataset, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Schema(format!("CSV header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Schema(format!("CSV data row {}: {e}", i + 1)))?;
        rows.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    Ok(Dataset::from_text(
        schema, &header, &rows, na_tokens, source,
    )?)
}

pub fn load_csv(path: &Path, schema: Schema, na_tokens: &[&str]) -> Result<Dataset, CliError> {
    let text = read_file(path)?;
    parse_csv(&text, schema, na_tokens, Some(&path.display().to_string()))
}

pub fn dataset_to_csv(d: &Dataset, na_token: &str) -> String {
    let (header, rows) = d.to_text(na_token);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in &rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// An output directory that refuses to clobber earlier results unless
/// forced. Files are recorded in write order for the manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path, force: bool) -> Result<OutputDir, CliError> {
        if root.exists() {
            if !root.is_dir() {
                return Err(CliError::Config(format!(
                    "output path {} is not a directory",
                    root.display()
                )));
            }
            let non_empty = fs::read_dir(root)
                .map_err(|e| CliError::io(root, e))?
                .next()
                .is_some();
            if non_empty {
                if !force {
                    return Err(CliError::Config(format!(
                        "output directory {} is not empty; pass --force to overwrite",
                        root.display()
                    )));
                }
                fs::remove_dir_all(root).map_err(|e| CliError::io(root, e))?;
            }
        }
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = r#"
[[variable]]
code = "employer_arr_qual"
kind = "categorical"
role = "policy_key"
categories = ["Fully on-site", "Hybrid", "Fully remote"]
reference = "Fully on-site"

[[variable]]
code = "workteam_npeople"
kind = "continuous"
role = "firm_value"
units = "people"
"#;

    #[test]
    fn schema_round_trips_through_toml() {
        let s = parse_schema(SCHEMA).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(parse_schema(&schema_to_toml(&s)).unwrap(), s);
    }

    #[test]
    fn duplicate_codes_are_schema_errors() {
        let doubled = format!(
            "{SCHEMA}{}",
            &SCHEMA[SCHEMA.find("[[variable]]\ncode = \"workteam").unwrap()..]
        );
        assert!(matches!(parse_schema(&doubled), Err(CliError::Schema(_))));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let s = parse_schema(SCHEMA).unwrap();
        let text = "employer_arr_qual,workteam_npeople\n1,0.1\nFully remote,NA\n2,1e-300\n";
        let d = parse_csv(text, s.clone(), &DEFAULT_NA_TOKENS, None).unwrap();
        let back = parse_csv(&dataset_to_csv(&d, "NA"), s, &DEFAULT_NA_TOKENS, None).unwrap();
        assert_eq!(back.columns(), d.columns());
        assert_eq!(back.mask(), d.mask());
    }

    #[test]
    fn non_empty_output_needs_force() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path(), false).unwrap();
        out.write("a.txt", "x").unwrap();
        assert!(matches!(
            OutputDir::create(dir.path(), false),
            Err(CliError::Config(_))
        ));
        assert!(dir.path().join("a.txt").exists());
        OutputDir::create(dir.path(), true).unwrap();
        assert!(!dir.path().join("a.txt").exists());
    }
}
