use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spikewave::pipeline::{LrSchedule, NetworkConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CacheKind {
    Memory,
    Disk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheConfig {
    pub mode: CacheKind,
    /// Defaults to `<out>/cache`.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            mode: CacheKind::Memory,
            dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "two")]
    pub stage1_epochs: usize,
    #[serde(default = "four")]
    pub stage2_epochs: usize,
    #[serde(default = "fifty")]
    pub rl_epochs: usize,
    /// Reshuffle the training set every epoch.
    #[serde(default = "yes")]
    pub shuffle: bool,
    /// Learning-rate growth during layer-wise STDP; absent disables it.
    #[serde(default = "default_lr")]
    pub lr_schedule: Option<LrSchedule>,
    /// Scale R-STDP rates by the previous epoch's error and accuracy.
    #[serde(default = "yes")]
    pub adaptive_rl: bool,
}

fn two() -> usize {
    2
}
fn four() -> usize {
    4
}
fn fifty() -> usize {
    50
}
fn yes() -> bool {
    true
}
fn default_lr() -> Option<LrSchedule> {
    Some(LrSchedule::default())
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            stage1_epochs: 2,
            stage2_epochs: 4,
            rl_epochs: 50,
            shuffle: true,
            lr_schedule: default_lr(),
            adaptive_rl: true,
        }
    }
}

/// One experiment, read from TOML. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default)]
    pub precision: Precision,
    pub data: DataConfig,
    #[serde(default)]
    pub cache: CacheConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default = "NetworkConfig::mnist_default")]
    pub network: NetworkConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.network
            .validate()
            .map_err(|e| CliError::Config(format!("network: {e}")))?;
        if let Some(s) = &self.schedule.lr_schedule {
            if s.every == 0 || !(s.factor > 0.0) || !s.max_a_plus.is_finite() || !s.a_minus_ratio.is_finite() {
                return Err(CliError::Config("schedule.lr_schedule needs every >= 1 and finite positive rates".into()));
            }
        }
        for (name, limit) in [("train_limit", self.data.train_limit), ("test_limit", self.data.test_limit)] {
            if limit == Some(0) {
                return Err(CliError::Config(format!("data.{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache.dir.clone().unwrap_or_else(|| self.out.join("cache"))
    }

    /// Paths in the file are relative to the file's directory.
    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        fix(&mut self.data.train_images);
        fix(&mut self.data.train_labels);
        fix(&mut self.data.test_images);
        fix(&mut self.data.test_labels);
        if let Some(d) = &mut self.cache.dir {
            fix(d);
        }
    }
}
