use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::LabError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const REPORT_FILE: &str = "report.json";

#[derive(Serialize)]
struct Report<'a, T> {
    experiment: &'static str,
    version: &'static str,
    config_hash: String,
    seed: u64,
    config: &'a ExperimentConfig,
    violations: &'a [String],
    result: &'a T,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(cfg.canonical()))
}

/// Writes `report.json` under `out`. Contents depend only on the config.
pub fn write_report<T: Serialize>(cfg: &ExperimentConfig, out: &Path, result: &T, violations: &[String]) -> Result<PathBuf, LabError> {
    let report = Report {
        experiment: cfg.experiment.name(),
        version: VERSION,
        config_hash: config_hash(cfg),
        seed: cfg.seed,
        config: cfg,
        violations,
        result,
    };
    let path = out.join(REPORT_FILE);
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, &report).map_err(std::io::Error::other)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(path)
}
