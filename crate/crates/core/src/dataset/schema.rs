use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum VariableKind {
    Continuous,
    Categorical,
    /// Numeric 0/1 indicator.
    Binary,
}

/// What a variable is used for in the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Role {
    FirmValue,
    ProductivityComponent,
    WfhRelated,
    Demographic,
    Control,
    Wage,
    PolicyKey,
}

impl Role {
    /// Roles whose variables enter the firm-value and productivity equations
    /// as explanatory variables.
    pub fn is_regressor(self) -> bool {
        matches!(self, Role::WfhRelated | Role::Demographic | Role::Control)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VariableSpec {
    pub code: String,
    pub kind: VariableKind,
    pub role: Role,
    /// Ordered level labels (categorical only). The 1-based position of a
    /// label is its numeric survey code.
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Vec::is_empty")
    )]
    pub categories: Vec<String>,
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub reference: Option<String>,
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "String::is_empty")
    )]
    pub units: String,
}

impl VariableSpec {
    pub fn continuous(code: &str, role: Role) -> Self {
        VariableSpec {
            code: code.to_string(),
            kind: VariableKind::Continuous,
            role,
            categories: Vec::new(),
            reference: None,
            units: String::new(),
        }
    }

    pub fn binary(code: &str, role: Role) -> Self {
        VariableSpec {
            kind: VariableKind::Binary,
            ..Self::continuous(code, role)
        }
    }

    pub fn categorical(code: &str, role: Role, categories: &[&str], reference: &str) -> Self {
        VariableSpec {
            code: code.to_string(),
            kind: VariableKind::Categorical,
            role,
            categories: categories.iter().map(|c| c.to_string()).collect(),
            reference: Some(reference.to_string()),
            units: String::new(),
        }
    }

    pub fn with_units(mut self, units: &str) -> Self {
        self.units = units.to_string();
        self
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == VariableKind::Categorical
    }

    /// Index of the reference level (categorical only).
    pub fn reference_index(&self) -> Option<usize> {
        let r = self.reference.as_ref()?;
        self.categories.iter().position(|c| c == r)
    }

    fn validate(&self) -> Result<()> {
        if self.code.is_empty() {
            return Err(Error::Schema("variable with empty code".into()));
        }
        match self.kind {
            VariableKind::Categorical => {
                if self.categories.len() < 2 {
                    return Err(Error::Schema(format!(
                        "categorical `{}` needs at least 2 categories",
                        self.code
                    )));
                }
                let distinct: BTreeSet<&String> = self.categories.iter().collect();
                if distinct.len() != self.categories.len() {
                    return Err(Error::Schema(format!(
                        "categorical `{}` has duplicate labels",
                        self.code
                    )));
                }
                match &self.reference {
                    None => {
                        return Err(Error::Schema(format!(
                            "categorical `{}` has no reference level",
                            self.code
                        )))
                    }
                    Some(r) if !self.categories.contains(r) => {
                        return Err(Error::Schema(format!(
                            "reference level `{r}` of `{}` is not one of its categories",
                            self.code
                        )))
                    }
                    _ => {}
                }
            }
            _ => {
                if !self.categories.is_empty() || self.reference.is_some() {
                    return Err(Error::Schema(format!(
                        "non-categorical `{}` must not list categories",
                        self.code
                    )));
                }
            }
        }
        Ok(())
    }
}

/// An ordered, validated list of variable specs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Schema {
    variables: Vec<VariableSpec>,
}

impl Schema {
    pub fn new(variables: Vec<VariableSpec>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for v in &variables {
            v.validate()?;
            if !seen.insert(v.code.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate variable code `{}`",
                    v.code
                )));
            }
        }
        Ok(Schema { variables })
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.code == code)
    }

    pub fn get(&self, code: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.code == code)
    }

    pub fn require(&self, code: &str) -> Result<usize> {
        self.index_of(code)
            .ok_or_else(|| Error::Schema(format!("column `{code}` is not in the schema")))
    }

    pub fn codes_with_role(&self, role: Role) -> Vec<&str> {
        self.variables
            .iter()
            .filter(|v| v.role == role)
            .map(|v| v.code.as_str())
            .collect()
    }

    /// Restricts the schema to `codes`, in schema order.
    pub fn project(&self, codes: &[&str]) -> Result<Schema> {
        for c in codes {
            self.require(c)?;
        }
        Ok(Schema {
            variables: self
                .variables
                .iter()
                .filter(|v| codes.contains(&v.code.as_str()))
                .cloned()
                .collect(),
        })
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for Schema {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let variables = Vec::<VariableSpec>::deserialize(d)?;
        Schema::new(variables).map_err(serde::de::Error::custom)
    }
}
