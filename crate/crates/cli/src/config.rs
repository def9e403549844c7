use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tlps_core::env::VehicleConfig;
use tlps_core::search::TrainConfig;

use crate::error::CliError;

/// Run description loaded from a TOML file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub env: VehicleConfig,
    pub spec: SpecSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecSection {
    /// Relative paths are taken from the config file's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub dump_trajectories: bool,
    /// Record real iteration times in the learning curve instead of zeros.
    pub wall_clock: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("tlps-out"),
            dump_trajectories: false,
            wall_clock: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        if cfg.spec.path.is_relative() {
            let base = path.parent().unwrap_or(Path::new(""));
            cfg.spec.path = base.join(&cfg.spec.path);
        }
        cfg.env.validate().map_err(|e| CliError::Config(e.to_string()))?;
        cfg.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}
