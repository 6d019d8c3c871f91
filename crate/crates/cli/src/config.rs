//! Run configuration: a TOML file, then command-line overrides.
//!
//! ```toml
//! data = "set.eege"
//! out = "run"
//! seed = 1
//! test_fraction = 0.2
//! val_fraction = 0.125
//!
//! [train]
//! learning_rate = 0.01
//! max_epochs = 200
//! patience = 35
//! batch_size = 16
//!
//! [arch]
//! f1 = 8
//! temporal_kernel = 64
//! maxnorm_dense = 0.25   # 0 disables the constraint
//! ```
//!
//! Channel and sample counts come from the data file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sten_core::{ArchConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub train: TrainSection,
    pub arch: ArchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: None,
            seed: 0,
            test_fraction: 0.2,
            val_fraction: 0.125,
            train: TrainSection::default(),
            arch: ArchSection::default(),
        }
    }
}

/// Optimizer and stopping settings; checkpoint and log paths live under
/// `out`, and the training seed derives from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            max_epochs: t.max_epochs,
            patience: t.patience,
            batch_size: t.batch_size,
            beta1: t.beta1,
            beta2: t.beta2,
            eps_adam: t.eps_adam,
        }
    }
}

impl TrainSection {
    pub fn to_config(&self, seed: u64, out: &Path) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            beta1: self.beta1,
            beta2: self.beta2,
            eps_adam: self.eps_adam,
            seed,
            checkpoint_path: out.join(crate::CHECKPOINT_FILE),
            log_path: Some(out.join(crate::LOG_FILE)),
        }
    }
}

/// Network shape except the input geometry. Max-norm limits of 0 disable
/// the constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSection {
    pub f1: usize,
    pub depth_multiplier: usize,
    pub f2: usize,
    pub temporal_kernel: usize,
    pub sep_kernel: usize,
    pub pool1: usize,
    pub pool2: usize,
    pub dropout_p: f32,
    pub dense_units: usize,
    pub maxnorm_depthwise: f32,
    pub maxnorm_dense: f32,
}

impl Default for ArchSection {
    fn default() -> Self {
        let a = ArchConfig::default();
        Self {
            f1: a.f1,
            depth_multiplier: a.depth_multiplier,
            f2: a.f2,
            temporal_kernel: a.temporal_kernel,
            sep_kernel: a.sep_kernel,
            pool1: a.pool1,
            pool2: a.pool2,
            dropout_p: a.dropout_p,
            dense_units: a.dense_units,
            maxnorm_depthwise: a.maxnorm_depthwise.unwrap_or(0.0),
            maxnorm_dense: a.maxnorm_dense.unwrap_or(0.0),
        }
    }
}

impl ArchSection {
    pub fn to_arch(&self, n_channels: usize, n_samples: usize) -> ArchConfig {
        let limit = |v: f32| (v != 0.0).then_some(v);
        ArchConfig {
            f1: self.f1,
            depth_multiplier: self.depth_multiplier,
            f2: self.f2,
            temporal_kernel: self.temporal_kernel,
            sep_kernel: self.sep_kernel,
            pool1: self.pool1,
            pool2: self.pool2,
            dropout_p: self.dropout_p,
            dense_units: self.dense_units,
            maxnorm_depthwise: limit(self.maxnorm_depthwise),
            maxnorm_dense: limit(self.maxnorm_dense),
            ..ArchConfig::with_geometry(n_channels, n_samples)
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub test_fraction: Option<f64>,
    pub val_fraction: Option<f64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn apply(&mut self, o: Overrides) {
        let Overrides {
            data,
            out,
            seed,
            test_fraction,
            val_fraction,
            epochs,
            lr,
            batch_size,
            patience,
        } = o;
        self.data = data.or(self.data.take());
        self.out = out.or(self.out.take());
        self.seed = seed.unwrap_or(self.seed);
        self.test_fraction = test_fraction.unwrap_or(self.test_fraction);
        self.val_fraction = val_fraction.unwrap_or(self.val_fraction);
        self.train.max_epochs = epochs.unwrap_or(self.train.max_epochs);
        self.train.learning_rate = lr.unwrap_or(self.train.learning_rate);
        self.train.batch_size = batch_size.unwrap_or(self.train.batch_size);
        self.train.patience = patience.unwrap_or(self.train.patience);
    }

    pub fn data_path(&self) -> Result<&Path> {
        match &self.data {
            Some(p) => Ok(p),
            None => bail!("no data file: pass --data or set `data` in the config"),
        }
    }

    pub fn out_dir(&self) -> Result<&Path> {
        match &self.out {
            Some(p) => Ok(p),
            None => bail!("no output directory: pass --out or set `out` in the config"),
        }
    }
}
