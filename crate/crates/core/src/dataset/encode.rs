use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::{Column, Dataset, VariableKind};
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "Intercept";
pub const AGE_CODE: &str = "age_quant";
pub const AGE_SQUARED: &str = "Age2";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceLevel {
    pub code: String,
    pub level: String,
}

/// Numeric regressors with named columns; the intercept, when present, is column 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    matrix: DMatrix<f64>,
    intercept: bool,
    reference_levels: Vec<ReferenceLevel>,
    dropped_levels: Vec<String>,
}

impl DesignMatrix {
    /// Wraps a raw matrix. With `intercept`, column 0 must be constant 1.
    pub fn new(names: Vec<String>, matrix: DMatrix<f64>, intercept: bool) -> Result<Self> {
        if names.len() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                what: "design column names".into(),
                expected: matrix.ncols(),
                got: names.len(),
            });
        }
        if intercept && (matrix.ncols() == 0 || matrix.column(0).iter().any(|v| *v != 1.0)) {
            return Err(Error::Precondition(
                "intercept column must be all ones".into(),
            ));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::Schema(format!("duplicate design column `{n}`")));
            }
        }
        Ok(DesignMatrix {
            names,
            matrix,
            intercept,
            reference_levels: Vec::new(),
            dropped_levels: Vec::new(),
        })
    }

    /// Intercept followed by the given named columns.
    pub fn from_columns(columns: &[(&str, &[f64])]) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.1.len());
        let mut names = alloc::vec![INTERCEPT.to_string()];
        let mut m = DMatrix::from_element(n, columns.len() + 1, 1.0);
        for (j, (name, vals)) in columns.iter().enumerate() {
            if vals.len() != n {
                return Err(Error::DimensionMismatch {
                    what: format!("column `{name}`"),
                    expected: n,
                    got: vals.len(),
                });
            }
            names.push(name.to_string());
            for (i, v) in vals.iter().enumerate() {
                m[(i, j + 1)] = *v;
            }
        }
        DesignMatrix::new(names, m, true)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn reference_levels(&self) -> &[ReferenceLevel] {
        &self.reference_levels
    }

    /// Dummy columns omitted because their level never occurs.
    pub fn dropped_levels(&self) -> &[String] {
        &self.dropped_levels
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// A copy with one more column appended at the end.
    pub fn with_column(&self, name: &str, values: &[f64]) -> Result<DesignMatrix> {
        if values.len() != self.nrows() {
            return Err(Error::DimensionMismatch {
                what: format!("column `{name}`"),
                expected: self.nrows(),
                got: values.len(),
            });
        }
        if self.column_index(name).is_some() {
            return Err(Error::Schema(format!("duplicate design column `{name}`")));
        }
        let k = self.ncols();
        let mut matrix = self.matrix.clone().insert_column(k, 0.0);
        for (i, v) in values.iter().enumerate() {
            matrix[(i, k)] = *v;
        }
        let mut names = self.names.clone();
        names.push(name.to_string());
        Ok(DesignMatrix {
            names,
            matrix,
            intercept: self.intercept,
            reference_levels: self.reference_levels.clone(),
            dropped_levels: self.dropped_levels.clone(),
        })
    }

    /// Removes non-intercept columns that are constant (they duplicate the
    /// intercept); returns the reduced design and the removed names.
    pub fn drop_constant_columns(&self) -> (DesignMatrix, Vec<String>) {
        let first = if self.intercept { 1 } else { 0 };
        let keep: Vec<usize> = (0..self.ncols())
            .filter(|&j| {
                j < first || {
                    let c = self.matrix.column(j);
                    c.iter().any(|v| *v != c[0])
                }
            })
            .collect();
        let dropped = (0..self.ncols())
            .filter(|j| !keep.contains(j))
            .map(|j| self.names[j].clone())
            .collect();
        let matrix = DMatrix::from_fn(self.nrows(), keep.len(), |i, j| self.matrix[(i, keep[j])]);
        let names = keep.iter().map(|&j| self.names[j].clone()).collect();
        (
            DesignMatrix {
                names,
                matrix,
                ..self.clone()
            },
            dropped,
        )
    }

    /// Rows `rows` of the design, same columns.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        let matrix = DMatrix::from_fn(rows.len(), self.ncols(), |i, j| self.matrix[(rows[i], j)]);
        DesignMatrix {
            matrix,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EncodeOptions {
    /// Variables to encode, in schema order; `None` encodes every variable.
    pub variables: Option<Vec<String>>,
    /// Omit dummy columns for levels with no observations (they would make
    /// the design rank deficient).
    pub drop_empty_levels: bool,
}

/// Dummy-encodes every variable of a completed dataset.
pub fn encode(d: &Dataset) -> Result<DesignMatrix> {
    encode_with(d, &EncodeOptions::default())
}

pub fn encode_with(d: &Dataset, opts: &EncodeOptions) -> Result<DesignMatrix> {
    let schema = d.schema();
    if let Some(vars) = &opts.variables {
        for v in vars {
            schema.require(v)?;
        }
    }
    let selected: Vec<usize> = (0..schema.len())
        .filter(|&j| match &opts.variables {
            None => true,
            Some(v) => v.iter().any(|c| *c == schema.variables()[j].code),
        })
        .collect();
    for &j in &selected {
        if let Some(i) = d.mask()[j].iter().position(|m| *m) {
            return Err(Error::Precondition(format!(
                "cannot encode `{}`: missing cell at row {}; impute the data first",
                schema.variables()[j].code,
                i + 1
            )));
        }
    }

    let n = d.n_rows();
    let mut names = alloc::vec![INTERCEPT.to_string()];
    let mut cols: Vec<Vec<f64>> = alloc::vec![alloc::vec![1.0; n]];
    let mut reference_levels = Vec::new();
    let mut dropped_levels = Vec::new();
    for &j in &selected {
        let spec = &schema.variables()[j];
        match (d.column(j), spec.kind) {
            (Column::Numeric(v), VariableKind::Continuous | VariableKind::Binary) => {
                names.push(spec.code.clone());
                cols.push(v.clone());
                if spec.code == AGE_CODE && spec.kind == VariableKind::Continuous {
                    names.push(AGE_SQUARED.to_string());
                    cols.push(v.iter().map(|a| a * a).collect());
                }
            }
            (Column::Categorical(levels), _) => {
                let reference = spec.reference_index().expect("validated schema");
                reference_levels.push(ReferenceLevel {
                    code: spec.code.clone(),
                    level: spec.categories[reference].clone(),
                });
                for (c, label) in spec.categories.iter().enumerate() {
                    if c == reference {
                        continue;
                    }
                    let name = format!("{}_{}", spec.code, label);
                    let dummy: Vec<f64> = levels
                        .iter()
                        .map(|&l| if l as usize == c { 1.0 } else { 0.0 })
                        .collect();
                    if opts.drop_empty_levels && dummy.iter().all(|v| *v == 0.0) {
                        dropped_levels.push(name);
                        continue;
                    }
                    names.push(name);
                    cols.push(dummy);
                }
            }
            _ => unreachable!("dataset storage matches schema kind"),
        }
    }
    let matrix = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let mut dm = DesignMatrix::new(names, matrix, true)?;
    dm.reference_levels = reference_levels;
    dm.dropped_levels = dropped_levels;
    Ok(dm)
}
