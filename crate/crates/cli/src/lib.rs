//! Experiment runner for residual-unit ablations: declarative configs, a
//! preset catalog, multi-seed training, propagation reports and SVG plots.

pub mod analyze;
pub mod config;
pub mod fetch;
pub mod plot;
pub mod presets;
pub mod runner;

use std::path::{Path, PathBuf};

use config::{ConfigError, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}:\n{source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] resprop_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for configuration and usage problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Invalid(_) | CliError::Usage(_) => 2,
            CliError::Core(resprop_core::Error::InvalidConfig(_) | resprop_core::Error::InvalidDepth { .. }) => 2,
            _ => 1,
        }
    }
}

/// Resolves `--preset` and `--config`; a config file is applied on top of the preset.
pub fn load_config(config: Option<&Path>, preset: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let base = match preset {
        Some(name) => presets::find(name).map(|p| p.config).ok_or_else(|| {
            let names: Vec<&str> = presets::catalog().iter().map(|p| p.name).collect();
            CliError::Usage(format!("unknown preset {name:?}; available: {}", names.join(", ")))
        })?,
        None if config.is_none() => return Err(CliError::Usage("pass --config PATH or --preset NAME".into())),
        None => ExperimentConfig::default(),
    };
    match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse_over(base, &text).map_err(|source| CliError::Config { path: path.to_path_buf(), source })
        }
        None => Ok(base),
    }
}
