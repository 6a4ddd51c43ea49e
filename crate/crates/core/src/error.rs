use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the estimation toolkit.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at data row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("rank-deficient design; dependent columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("insufficient data: {observations} observations for {parameters} parameters")]
    InsufficientData {
        observations: usize,
        parameters: usize,
    },

    #[error("variable `{variable}` has only {observed} observed cells (need at least {required})")]
    InsufficientSupport {
        variable: String,
        observed: usize,
        required: usize,
    },

    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    #[error("{p} factors not identifiable with {q} variables (maximum {max})")]
    Identifiability { p: usize, q: usize, max: usize },

    #[error("model selection failed: {0}")]
    Selection(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

/// Coarse error families, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Schema,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_)
            | Error::Domain(_)
            | Error::Precondition(_)
            | Error::Identifiability { .. } => ErrorClass::Config,
            Error::Schema(_) | Error::Parse { .. } => ErrorClass::Schema,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Numerical,
        }
    }

    /// Wraps the error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: alloc::boxed::Box::new(self),
        }
    }

    /// The innermost error, with stage labels stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
