//! Configuration-driven runner for continuous phase-space measurement
//! experiments, built on [`contmeas_core`].
//!
//! A run reads a flat `key = value` file (see [`config`]), fans trajectories
//! out over a thread pool with one counter-based random stream per
//! trajectory, and writes tab-separated tables plus a digest manifest.

pub mod config;
pub mod ensemble;
pub mod output;
pub mod presets;
pub mod run;

pub use contmeas_core as core;
pub use config::{ConfigError, ExperimentConfig, Mode};
pub use run::{run, RunError, RunSummary};

use std::path::Path;

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io { path: path.display().to_string(), source })?;
    Ok(ExperimentConfig::parse(&text)?)
}
