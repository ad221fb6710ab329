//! Experiment runner for the denoising-diffusion library: built-in presets,
//! TOML configs with `key=value` overrides, and self-contained run
//! directories holding curves, metrics, the trained model and a manifest
//! that reproduces the run.

pub mod config;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{preset, resolve, ConfigSources, Experiment, RunConfig, PRESETS};
pub use run::{load_manifest, replay, run, run_preset, RunManifest, RunOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown preset '{0}' (available: {list})", list = PRESETS.join(", "))]
    UnknownPreset(String),

    #[error("invalid override: {0}")]
    InvalidOverride(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("replayed metrics differ from the manifest (rerun written to {0})")]
    ReplayMismatch(PathBuf),

    #[error(transparent)]
    Core(#[from] quddpm::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for bad input, 3 for a diverged optimization, 4 for a failed
    /// replay, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::UnknownPreset(_) | CliError::InvalidOverride(_) | CliError::Config(_) => 2,
            CliError::Core(quddpm::Error::NonFiniteLoss { .. }) => 3,
            CliError::ReplayMismatch(_) => 4,
            _ => 1,
        }
    }
}
