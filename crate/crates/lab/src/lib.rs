//! Reproducible GSP experiments driven by JSON configs.
//!
//! Each run writes `report.json` (plus experiment-specific CSV or JSON
//! files) into an output directory. Reports embed the SHA-256 of the
//! canonical config and the crate version, and depend only on the config:
//! thread count and wall time never leak into them.

pub mod config;
pub mod error;
mod experiments;
pub mod report;

use std::path::{Path, PathBuf};

pub use config::{Experiment, ExperimentConfig};
pub use error::LabError;
pub use experiments::REGRET_TOLERANCE;

#[derive(Debug)]
pub struct RunOutput {
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
    /// Files written, report first.
    pub files: Vec<PathBuf>,
}

/// Validates and runs `config`, writing reports into `out`. Invariant
/// breaches are reported after the files are written.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<RunOutput, LabError> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    let o = experiments::dispatch(config, out)?;
    if !o.violations.is_empty() {
        return Err(LabError::Invariant(o.violations.join("; ")));
    }
    Ok(RunOutput {
        summary: o.summary,
        files: o.files,
    })
}

/// [`run`] on a dedicated pool of `threads` workers (0 = rayon default).
pub fn run_with_threads(config: &ExperimentConfig, out: &Path, threads: usize) -> Result<RunOutput, LabError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LabError::Io(std::io::Error::other(e)))?;
    pool.install(|| run(config, out))
}
