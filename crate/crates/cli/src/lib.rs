//! Batch runner for the osatcom experiments: reads a TOML config, runs one
//! experiment, and writes a CSV plus a `manifest.json` into the output
//! directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{Experiment, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot parse {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:{}", format_violations(.0))]
    Invalid(Vec<(String, String)>),
    #[error(transparent)]
    Core(#[from] osatcom_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn format_violations(v: &[(String, String)]) -> String {
    v.iter().map(|(name, reason)| format!("\n  {name}: {reason}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub experiment: Experiment,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub duration_secs: f64,
    pub csv: String,
    pub rows: usize,
    pub summary: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

/// Files written by a run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub manifest: RunManifest,
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(config.to_toml().as_bytes()))
}

/// Validates, runs and persists one experiment.
pub fn run(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let violations = config.violations();
    if !violations.is_empty() {
        return Err(CliError::Invalid(violations));
    }
    let start = Instant::now();
    let outcome = experiments::execute(config)?;
    let dir = &config.output_path;
    let csv_path = dir.join(config.experiment.csv_name());
    output::write_atomic(&csv_path, &outcome.table.to_bytes()?)?;
    let manifest = RunManifest {
        experiment: config.experiment,
        config_sha256: config_hash(config),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_secs: start.elapsed().as_secs_f64(),
        csv: config.experiment.csv_name().to_string(),
        rows: outcome.table.rows.len(),
        summary: outcome.summary,
        warnings: outcome.warnings,
    };
    let manifest_path = dir.join("manifest.json");
    output::write_json(&manifest_path, &manifest)?;
    Ok(RunReport {
        csv_path,
        manifest_path,
        manifest,
    })
}

/// Parses the file and lists every violated invariant without running.
pub fn validate(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    Ok(ExperimentConfig::load(path)?.violations())
}
