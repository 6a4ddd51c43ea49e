//! File formats, parallel runner, report rendering and subcommands around
//! `latent-hazard-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::Path;

use latent_hazard_core::{Error, ErrorClass};

pub mod commands;
pub mod io;
pub mod parallel;
pub mod report;
pub mod results;

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> CliError {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Schema(_) => EXIT_SCHEMA,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => match e.class() {
                ErrorClass::Config => EXIT_CONFIG,
                ErrorClass::Schema => EXIT_SCHEMA,
                ErrorClass::Numerical => EXIT_NUMERICAL,
            },
        }
    }
}
