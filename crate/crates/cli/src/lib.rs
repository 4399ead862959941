//! Config-driven experiment runner.
// `!(x >= 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod presets;
pub mod runner;

use std::path::{Path, PathBuf};

pub use config::{parse_config, ConfigError, ExperimentConfig, Parsed};
pub use presets::{list_presets, preset};
pub use runner::{run_experiment, Rep, Row, RunError};

/// Runs a config and returns its CSV text.
pub fn run_to_csv(cfg: &ExperimentConfig) -> Result<String, RunError> {
    let rows = run_experiment(cfg)?;
    Ok(output::to_csv(cfg, &rows))
}

/// Runs a config and writes its CSV; returns the path written.
pub fn run_to_file(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<PathBuf, RunError> {
    let csv = run_to_csv(cfg)?;
    let path = output::output_path(cfg, dir);
    output::write_atomic(&path, &csv).map_err(|e| RunError(format!("writing {}: {e}", path.display())))?;
    Ok(path)
}
