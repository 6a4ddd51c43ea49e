//! Survey data: schema, storage with a missingness mask, policy subsamples,
//! dummy encoding and summary tables.

mod encode;
mod schema;
mod summary;

pub use encode::{
    encode, encode_with, DesignMatrix, EncodeOptions, ReferenceLevel, AGE_CODE, AGE_SQUARED,
    INTERCEPT,
};
pub use schema::{Role, Schema, VariableKind, VariableSpec};
pub use summary::{
    summarize, CategoricalSummary, ContinuousSummary, DatasetSummary, LevelFrequency,
};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Cell storage for one variable. Masked cells hold a placeholder (0).
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    /// Zero-based level indices into the variable's category list.
    Categorical(Vec<u32>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub source: Option<String>,
    pub filters: Vec<String>,
}

/// Tokens treated as missing when reading text cells.
pub const DEFAULT_NA_TOKENS: [&str; 2] = ["", "NA"];

/// Columnar survey table with a per-cell missingness mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<Column>,
    mask: Vec<Vec<bool>>,
    n: usize,
    provenance: Provenance,
}

impl Dataset {
    /// Builds a dataset, checking every invariant: shapes agree, observed
    /// numeric cells are finite, binary cells are 0/1, level indices are in range.
    pub fn new(
        schema: Schema,
        columns: Vec<Column>,
        mask: Vec<Vec<bool>>,
        provenance: Provenance,
    ) -> Result<Self> {
        if columns.len() != schema.len() {
            return Err(Error::DimensionMismatch {
                what: "columns vs schema".into(),
                expected: schema.len(),
                got: columns.len(),
            });
        }
        if mask.len() != schema.len() {
            return Err(Error::DimensionMismatch {
                what: "mask vs schema".into(),
                expected: schema.len(),
                got: mask.len(),
            });
        }
        let n = columns.first().map_or(0, Column::len);
        for (j, spec) in schema.variables().iter().enumerate() {
            if columns[j].len() != n || mask[j].len() != n {
                return Err(Error::DimensionMismatch {
                    what: format!("rows of `{}`", spec.code),
                    expected: n,
                    got: columns[j].len().min(mask[j].len()),
                });
            }
            match (&columns[j], spec.kind) {
                (Column::Numeric(vals), VariableKind::Continuous) => {
                    for (i, v) in vals.iter().enumerate() {
                        if !mask[j][i] && !v.is_finite() {
                            return Err(Error::Parse {
                                row: i + 1,
                                column: spec.code.clone(),
                                message: "non-finite value".into(),
                            });
                        }
                    }
                }
                (Column::Numeric(vals), VariableKind::Binary) => {
                    for (i, v) in vals.iter().enumerate() {
                        if !mask[j][i] && *v != 0.0 && *v != 1.0 {
                            return Err(Error::Parse {
                                row: i + 1,
                                column: spec.code.clone(),
                                message: format!("binary value {v} is not 0 or 1"),
                            });
                        }
                    }
                }
                (Column::Categorical(levels), VariableKind::Categorical) => {
                    for (i, l) in levels.iter().enumerate() {
                        if !mask[j][i] && *l as usize >= spec.categories.len() {
                            return Err(Error::Parse {
                                row: i + 1,
                                column: spec.code.clone(),
                                message: format!("level index {l} out of range"),
                            });
                        }
                    }
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "storage of `{}` does not match its kind {:?}",
                        spec.code, spec.kind
                    )))
                }
            }
        }
        Ok(Dataset {
            schema,
            columns,
            mask,
            n,
            provenance,
        })
    }

    /// Parses text records whose header names schema codes (any order).
    ///
    /// Categorical cells may hold either the level label or its 1-based code.
    pub fn from_text<S: AsRef<str>>(
        schema: Schema,
        header: &[S],
        rows: &[Vec<S>],
        na_tokens: &[&str],
        source: Option<&str>,
    ) -> Result<Self> {
        let header: Vec<&str> = header.iter().map(|h| h.as_ref().trim()).collect();
        for (i, h) in header.iter().enumerate() {
            if schema.index_of(h).is_none() {
                return Err(Error::Schema(format!("unknown column `{h}` in header")));
            }
            if header[..i].contains(h) {
                return Err(Error::Schema(format!(
                    "column `{h}` appears twice in header"
                )));
            }
        }
        let mut positions = Vec::with_capacity(schema.len());
        for v in schema.variables() {
            let pos = header
                .iter()
                .position(|h| *h == v.code)
                .ok_or_else(|| Error::Schema(format!("missing column `{}`", v.code)))?;
            positions.push(pos);
        }

        let n = rows.len();
        let mut columns = Vec::with_capacity(schema.len());
        let mut mask = Vec::with_capacity(schema.len());
        for (spec, &pos) in schema.variables().iter().zip(&positions) {
            let mut miss = vec![false; n];
            let column = match spec.kind {
                VariableKind::Categorical => {
                    let mut levels = vec![0u32; n];
                    for (i, row) in rows.iter().enumerate() {
                        let cell = cell_at(row, pos, i, &spec.code)?;
                        if na_tokens.contains(&cell) {
                            miss[i] = true;
                            continue;
                        }
                        levels[i] = parse_level(spec, cell).ok_or_else(|| Error::Parse {
                            row: i + 1,
                            column: spec.code.clone(),
                            message: format!("`{cell}` is not a category of `{}`", spec.code),
                        })?;
                    }
                    Column::Categorical(levels)
                }
                _ => {
                    let mut vals = vec![0.0; n];
                    for (i, row) in rows.iter().enumerate() {
                        let cell = cell_at(row, pos, i, &spec.code)?;
                        if na_tokens.contains(&cell) {
                            miss[i] = true;
                            continue;
                        }
                        let v: f64 = cell.parse().map_err(|_| Error::Parse {
                            row: i + 1,
                            column: spec.code.clone(),
                            message: format!("`{cell}` is not numeric"),
                        })?;
                        vals[i] = v;
                    }
                    Column::Numeric(vals)
                }
            };
            columns.push(column);
            mask.push(miss);
        }
        Dataset::new(
            schema,
            columns,
            mask,
            Provenance {
                source: source.map(|s| s.to_string()),
                filters: Vec::new(),
            },
        )
    }

    /// Text rendering of the table: header plus one row of cells per record.
    /// Numbers use the shortest representation that parses back to the same
    /// bits; categorical cells use labels.
    pub fn to_text(&self, na_token: &str) -> (Vec<String>, Vec<Vec<String>>) {
        let header = self
            .schema
            .variables()
            .iter()
            .map(|v| v.code.clone())
            .collect();
        let mut rows = vec![Vec::with_capacity(self.schema.len()); self.n];
        for (j, spec) in self.schema.variables().iter().enumerate() {
            for (i, row) in rows.iter_mut().enumerate() {
                if self.mask[j][i] {
                    row.push(na_token.to_string());
                    continue;
                }
                row.push(match &self.columns[j] {
                    Column::Numeric(v) => format!("{}", v[i]),
                    Column::Categorical(l) => spec.categories[l[i] as usize].clone(),
                });
            }
        }
        (header, rows)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_vars(&self) -> usize {
        self.schema.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &Column {
        &self.columns[j]
    }

    pub fn mask(&self) -> &[Vec<bool>] {
        &self.mask
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.mask[col][row]
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn missing_count(&self, col: usize) -> usize {
        self.mask[col].iter().filter(|m| **m).count()
    }

    pub fn total_missing(&self) -> usize {
        (0..self.n_vars()).map(|j| self.missing_count(j)).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|m| m.iter().all(|x| !x))
    }

    /// Numeric value of an observed cell; categorical cells yield their
    /// 1-based level code.
    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        if self.mask[col][row] {
            return None;
        }
        Some(match &self.columns[col] {
            Column::Numeric(v) => v[row],
            Column::Categorical(l) => f64::from(l[row] + 1),
        })
    }

    /// A fully observed numeric column.
    pub fn numeric(&self, code: &str) -> Result<Vec<f64>> {
        let j = self.schema.require(code)?;
        match &self.columns[j] {
            Column::Numeric(v) => {
                if let Some(i) = self.mask[j].iter().position(|m| *m) {
                    return Err(Error::Precondition(format!(
                        "column `{code}` has a missing cell at row {}; impute first",
                        i + 1
                    )));
                }
                Ok(v.clone())
            }
            Column::Categorical(_) => Err(Error::Schema(format!(
                "column `{code}` is categorical, not numeric"
            ))),
        }
    }

    /// Keeps the given rows (in the given order) and records `note`.
    pub fn select_rows(&self, rows: &[usize], note: &str) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
                Column::Categorical(l) => Column::Categorical(rows.iter().map(|&i| l[i]).collect()),
            })
            .collect();
        let mask = self
            .mask
            .iter()
            .map(|m| rows.iter().map(|&i| m[i]).collect())
            .collect();
        let mut provenance = self.provenance.clone();
        provenance.filters.push(note.to_string());
        Dataset {
            schema: self.schema.clone(),
            columns,
            mask,
            n: rows.len(),
            provenance,
        }
    }

    /// Keeps only the listed variables.
    pub fn select_columns(&self, codes: &[&str]) -> Result<Dataset> {
        let schema = self.schema.project(codes)?;
        let idx: Vec<usize> = schema
            .variables()
            .iter()
            .map(|v| self.schema.index_of(&v.code).expect("projected"))
            .collect();
        Ok(Dataset {
            schema,
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            mask: idx.iter().map(|&j| self.mask[j].clone()).collect(),
            n: self.n,
            provenance: self.provenance.clone(),
        })
    }

    pub fn with_note(mut self, note: &str) -> Dataset {
        self.provenance.filters.push(note.to_string());
        self
    }

    pub(crate) fn parts_mut(&mut self) -> (&Schema, &mut [Column], &mut [Vec<bool>]) {
        (&self.schema, &mut self.columns, &mut self.mask)
    }
}

fn cell_at<'a, S: AsRef<str>>(row: &'a [S], pos: usize, i: usize, code: &str) -> Result<&'a str> {
    row.get(pos)
        .map(|c| c.as_ref().trim())
        .ok_or_else(|| Error::Parse {
            row: i + 1,
            column: code.to_string(),
            message: "record is too short".into(),
        })
}

fn parse_level(spec: &VariableSpec, cell: &str) -> Option<u32> {
    if let Some(i) = spec.categories.iter().position(|c| c == cell) {
        return Some(i as u32);
    }
    let code: usize = cell.parse().ok()?;
    (1..=spec.categories.len())
        .contains(&code)
        .then(|| (code - 1) as u32)
}

/// Long-term working-arrangement policy of the worker's firm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Policy {
    All,
    OnSite,
    Hybrid,
    FullyRemote,
}

impl Policy {
    /// Survey code of the policy key, `None` for the unfiltered sample.
    pub fn code(self) -> Option<u32> {
        match self {
            Policy::All => None,
            Policy::OnSite => Some(1),
            Policy::Hybrid => Some(2),
            Policy::FullyRemote => Some(3),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Policy::All => "all",
            Policy::OnSite => "on_site",
            Policy::Hybrid => "hybrid",
            Policy::FullyRemote => "fully_remote",
        }
    }

    pub fn parse(s: &str) -> Option<Policy> {
        match s {
            "all" => Some(Policy::All),
            "on_site" => Some(Policy::OnSite),
            "hybrid" => Some(Policy::Hybrid),
            "fully_remote" => Some(Policy::FullyRemote),
            _ => None,
        }
    }
}

/// The policy-key column: the variable with role `policy_key`.
pub fn policy_key_index(schema: &Schema) -> Result<usize> {
    schema
        .variables()
        .iter()
        .position(|v| v.role == Role::PolicyKey)
        .ok_or_else(|| Error::Schema("no policy-key column (role `policy_key`) in schema".into()))
}

/// Row indices belonging to `policy`.
pub fn policy_rows(d: &Dataset, policy: Policy) -> Result<Vec<usize>> {
    let key = policy_key_index(d.schema())?;
    Ok(match policy.code() {
        None => (0..d.n_rows()).collect(),
        Some(code) => (0..d.n_rows())
            .filter(|&i| d.value(i, key) == Some(f64::from(code)))
            .collect(),
    })
}

/// Rows of `d` under the given long-term policy.
pub fn subsample(d: &Dataset, policy: Policy) -> Result<Dataset> {
    let rows = policy_rows(d, policy)?;
    let key = &d.schema().variables()[policy_key_index(d.schema())?].code;
    Ok(d.select_rows(&rows, &format!("subsample {}: {key}", policy.name())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new(vec![
            VariableSpec::continuous("x", Role::WfhRelated),
            VariableSpec::categorical("gender", Role::Demographic, &["Female", "Male"], "Female"),
            VariableSpec::categorical("employer_arr_qual", Role::PolicyKey, &["1", "2", "3"], "1"),
            VariableSpec::binary("own_room", Role::WfhRelated),
        ])
        .unwrap()
    }

    fn text(rows: &[[&str; 4]]) -> Result<Dataset> {
        let header = ["x", "gender", "employer_arr_qual", "own_room"];
        let rows: Vec<Vec<&str>> = rows.iter().map(|r| r.to_vec()).collect();
        Dataset::from_text(
            schema(),
            &header,
            &rows,
            &DEFAULT_NA_TOKENS,
            Some("fixture"),
        )
    }

    #[test]
    fn na_cells_are_masked() {
        let d = text(&[
            ["1.5", "Female", "1", "0"],
            ["NA", "Male", "3", "1"],
            ["2", "2", "2", "1"],
        ])
        .unwrap();
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.total_missing(), 1);
        assert!(d.is_missing(1, 0));
        // numeric code 2 resolves to the second label
        assert_eq!(d.value(2, 1), Some(2.0));
    }

    #[test]
    fn complete_file_has_empty_mask() {
        let d = text(&[["1", "Female", "1", "0"], ["2", "Male", "2", "1"]]).unwrap();
        assert!(d.is_complete());
    }

    #[test]
    fn non_numeric_text_reports_row() {
        let err = text(&[["1", "Female", "1", "0"], ["abc", "Male", "2", "1"]]).unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                row: 2,
                column: "x".into(),
                message: "`abc` is not numeric".into()
            }
        );
    }

    #[test]
    fn unknown_and_missing_columns_are_named() {
        let rows = vec![vec!["1", "Female", "1", "0"]];
        let err = Dataset::from_text(
            schema(),
            &["x", "sex", "employer_arr_qual", "own_room"],
            &rows,
            &DEFAULT_NA_TOKENS,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("`sex`")));
        let rows = vec![vec!["1", "1", "0"]];
        let err = Dataset::from_text(
            schema(),
            &["x", "employer_arr_qual", "own_room"],
            &rows,
            &DEFAULT_NA_TOKENS,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("`gender`")));
    }

    #[test]
    fn bad_category_and_binary_are_rejected() {
        assert!(text(&[["1", "Robot", "1", "0"]]).is_err());
        assert!(text(&[["1", "Male", "1", "0.5"]]).is_err());
        assert!(text(&[["1", "Male", "4", "0"]]).is_err());
    }

    #[test]
    fn subsample_filters_on_policy_key() {
        let d = text(&[
            ["1", "Female", "1", "0"],
            ["2", "Male", "3", "1"],
            ["3", "Male", "1", "1"],
            ["4", "Male", "NA", "1"],
        ])
        .unwrap();
        assert_eq!(subsample(&d, Policy::OnSite).unwrap().n_rows(), 2);
        assert_eq!(subsample(&d, Policy::Hybrid).unwrap().n_rows(), 0);
        assert_eq!(subsample(&d, Policy::FullyRemote).unwrap().n_rows(), 1);
        let all = subsample(&d, Policy::All).unwrap();
        assert_eq!(all.n_rows(), 4);
        assert_eq!(all.provenance().filters.len(), 1);
    }

    #[test]
    fn subsample_without_policy_key_is_schema_error() {
        let s = Schema::new(vec![VariableSpec::continuous("x", Role::Control)]).unwrap();
        let d = Dataset::from_text(s, &["x"], &[vec!["1"]], &DEFAULT_NA_TOKENS, None).unwrap();
        assert!(matches!(
            subsample(&d, Policy::OnSite),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let d = text(&[
            ["0.1", "Female", "1", "0"],
            ["NA", "Male", "3", "1"],
            ["1e-7", "Female", "NA", "1"],
        ])
        .unwrap();
        let (h, rows) = d.to_text("NA");
        let back =
            Dataset::from_text(schema(), &h, &rows, &DEFAULT_NA_TOKENS, Some("fixture")).unwrap();
        assert_eq!(back.columns(), d.columns());
        assert_eq!(back.mask(), d.mask());
    }
}
