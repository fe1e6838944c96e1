use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nmrrecon_core::{Error, Result};
use nmrrecon_diffusion::{ScheduleConfig, TrainConfig, UNetConfig};

use crate::dataset::DatasetConfig;
use crate::sweep::SweepConfig;

/// Everything a TOML experiment file can set. Each section mirrors the
/// fields of the matching configuration type, and every key is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub unet: UNetConfig,
    pub schedule: ScheduleConfig,
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_from(text, "config")
    }

    fn parse_from(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::arg(format!("{origin}: {}", e.to_string().trim())))
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse_from(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.sweep.dataset_dir);
        fix(&mut self.sweep.output_dir);
        for p in self.sweep.checkpoints.values_mut() {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
