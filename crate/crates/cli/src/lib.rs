//! Experiment harness for the kinetic Langevin toolkit: config parsing,
//! validation, seed handling and report persistence.

pub mod config;
pub mod error;
pub mod experiments;
pub mod validate;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{ExperimentConfig, ExperimentKind, Overrides, TargetSpec};
pub use error::CliError;
pub use validate::{has_errors, validate, Diagnostic, Level};

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub run_id: String,
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Effective config with the seed filled in; rerunning it reproduces
    /// every artifact.
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
    pub summary: serde_json::Value,
    pub artifacts: Vec<String>,
}

/// First 12 hex digits of the SHA-256 of the canonical config echo.
pub fn run_id(kind: ExperimentKind, cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(&(kind, cfg)).expect("config is always serializable");
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

/// Validates, fills in the seed, runs the experiment and writes
/// `<out>/report.json` plus the CSV traces. Nothing is written when
/// validation fails.
pub fn run(kind: ExperimentKind, mut cfg: ExperimentConfig) -> Result<(ExperimentReport, PathBuf), CliError> {
    let diags = validate(&cfg, kind);
    if has_errors(&diags) {
        return Err(CliError::Invalid(diags));
    }
    // below 2^63 so the recorded config stays valid TOML
    let seed = *cfg.seed.get_or_insert_with(|| rand::random::<u64>() >> 1);
    cfg.experiment = Some(kind);
    let out = cfg.out.take();
    let id = run_id(kind, &cfg);
    let out = out.unwrap_or_else(|| PathBuf::from("runs").join(format!("{kind}-{id}")));
    cfg.out = Some(out.clone());
    std::fs::create_dir_all(&out)?;
    let outcome = experiments::run(kind, &cfg, seed, &out)?;
    let report = ExperimentReport {
        run_id: id,
        experiment: kind,
        seed,
        config: cfg,
        warnings: diags.iter().map(|d| d.to_string()).collect(),
        summary: outcome.summary,
        artifacts: outcome.artifacts,
    };
    let file = std::fs::File::create(out.join("report.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &report)?;
    Ok((report, out))
}
