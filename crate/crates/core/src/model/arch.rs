use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Architecture constants of the spatio-temporal network.
///
/// Defaults follow the EEGNet reference family at DENS geometry
/// (128 electrodes, 7 s at 125 Hz), plus a 64-unit ReLU layer before the
/// softmax head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub n_channels: usize,
    pub n_samples: usize,
    /// Temporal filters.
    pub f1: usize,
    /// Spatial filters per temporal filter.
    pub depth_multiplier: usize,
    /// Separable (pointwise) filters.
    pub f2: usize,
    pub temporal_kernel: usize,
    pub sep_kernel: usize,
    pub pool1: usize,
    pub pool2: usize,
    pub dropout_p: f32,
    pub dense_units: usize,
    pub n_classes: usize,
    pub maxnorm_depthwise: Option<f32>,
    pub maxnorm_dense: Option<f32>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            n_channels: 128,
            n_samples: 875,
            f1: 8,
            depth_multiplier: 2,
            f2: 16,
            temporal_kernel: 64,
            sep_kernel: 16,
            pool1: 4,
            pool2: 8,
            dropout_p: 0.5,
            dense_units: 64,
            n_classes: 2,
            maxnorm_depthwise: Some(1.0),
            maxnorm_dense: Some(0.25),
        }
    }
}

impl ArchConfig {
    /// Default architecture at a different electrode/sample geometry.
    pub fn with_geometry(n_channels: usize, n_samples: usize) -> Self {
        Self {
            n_channels,
            n_samples,
            ..Self::default()
        }
    }

    /// Channels produced by the depthwise spatial stage (`F1 * D`).
    pub fn spatial_filters(&self) -> usize {
        self.f1 * self.depth_multiplier
    }

    /// Time steps left after both pooling stages.
    pub fn pooled_width(&self) -> usize {
        if self.pool1 == 0 || self.pool2 == 0 {
            return 0;
        }
        self.n_samples / self.pool1 / self.pool2
    }

    /// Length of the flattened feature vector fed to the dense layer.
    pub fn flat_features(&self) -> usize {
        self.f2 * self.pooled_width()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_channels", self.n_channels),
            ("n_samples", self.n_samples),
            ("f1", self.f1),
            ("depth_multiplier", self.depth_multiplier),
            ("f2", self.f2),
            ("temporal_kernel", self.temporal_kernel),
            ("sep_kernel", self.sep_kernel),
            ("pool1", self.pool1),
            ("pool2", self.pool2),
            ("dense_units", self.dense_units),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(invalid(format!("arch: {name} must be >= 1")));
            }
        }
        if self.n_classes < 2 {
            return Err(invalid(format!(
                "arch: n_classes must be >= 2, got {}",
                self.n_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(invalid(format!(
                "arch: dropout_p must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if self.pooled_width() < 1 {
            return Err(invalid(format!(
                "arch: floor(floor(n_samples / pool1) / pool2) must be >= 1, got floor(floor({} / {}) / {}) = 0",
                self.n_samples, self.pool1, self.pool2
            )));
        }
        for (name, lim) in [
            ("maxnorm_depthwise", self.maxnorm_depthwise),
            ("maxnorm_dense", self.maxnorm_dense),
        ] {
            if let Some(l) = lim {
                if !(l > 0.0 && l.is_finite()) {
                    return Err(invalid(format!("arch: {name} must be positive, got {l}")));
                }
            }
        }
        Ok(())
    }

    /// Trainable parameter count by closed-form arithmetic over the layer stack.
    pub fn trainable_count(&self) -> usize {
        let (f1, fd, f2) = (self.f1, self.spatial_filters(), self.f2);
        let temporal = f1 * self.temporal_kernel + 2 * f1;
        let spatial = fd * self.n_channels + 2 * fd;
        let separable = fd * self.sep_kernel + fd * f2 + 2 * f2;
        let hidden = self.flat_features() * self.dense_units + self.dense_units;
        let head = self.dense_units * self.n_classes + self.n_classes;
        temporal + spatial + separable + hidden + head
    }
}
