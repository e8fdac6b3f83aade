// SPDX-License-Identifier: Apache-2.0

//! Commands behind the `edgespace` binary. Each returns a `CliError` whose
//! exit code is 2 for configuration or usage problems and 3 for domain
//! failures such as a denied negotiation.

pub mod config;
pub mod data;
pub mod demo;
pub mod evaluate;
pub mod serve;
pub mod train;

use std::io::Write;

use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Domain(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Domain(_) | CliError::Io(_) => 3,
        }
    }
}

/// Output rendering shared by every command that prints a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    /// Plain-text table.
    #[default]
    Table,
    /// JSON document.
    Doc,
}

pub(crate) fn write_json<T: serde::Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| CliError::Domain(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

pub(crate) fn ensure_dir(dir: &std::path::Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}
