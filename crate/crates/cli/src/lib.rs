//! Reproducible experiment runner for the gibrat-core models.
//!
//! A run is fully described by an [`ExperimentConfig`]; the effective config is
//! written next to the outputs, and replaying it reproduces the CSV bodies
//! byte for byte.

use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod output;

pub use config::{ExperimentConfig, RunConfig};

#[derive(Debug, Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("self-check failed: {0}")]
    SelfCheck(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl AppError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } => 1,
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::SelfCheck(_) => 4,
        }
    }
}

impl From<gibrat_core::Error> for AppError {
    fn from(e: gibrat_core::Error) -> Self {
        use gibrat_core::Error as E;
        match e {
            E::Domain(_) | E::Config(_) | E::Argument(_) => Self::Config(e.to_string()),
            E::Numerical { .. } | E::Resource(_) => Self::Numerical(e.to_string()),
        }
    }
}

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub oracle_tol: Option<f64>,
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub command: &'static str,
    pub config_sha256: String,
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Turns failed self-checks into an error.
    pub fn into_result(self) -> Result<Self, AppError> {
        let failed: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} ({})", c.name, c.detail))
            .collect();
        if failed.is_empty() {
            Ok(self)
        } else {
            Err(AppError::SelfCheck(failed.join("; ")))
        }
    }
}

/// Applies the overrides, writes `config.json` and all outputs into
/// `opts.out`, and returns the self-check outcomes.
pub fn execute(mut config: ExperimentConfig, opts: &RunOptions) -> Result<RunReport, AppError> {
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(tol) = opts.oracle_tol {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(AppError::Config(format!("oracle tolerance must lie in (0, 1), got {tol}")));
        }
        config.oracle_tol = Some(tol);
    }
    let hash = config.hash();
    let command = config.run.command();
    let mut out = output::OutputDir::create(&opts.out, command, &hash)?;
    let mut text = config.canonical_json();
    text.push('\n');
    out.raw("config.json", &text)?;
    let checks = commands::run(&config, opts.force, &mut out)?;
    Ok(RunReport {
        command,
        config_sha256: hash,
        files: out.written().to_vec(),
        checks,
    })
}
