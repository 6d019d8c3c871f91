//! # sten-core
//!
//! A subject-independent EEG valence classifier built from scratch: a compact
//! spatio-temporal CNN (temporal convolution, depthwise spatial convolution,
//! separable convolution, extra dense layer) trained with Adam and early
//! stopping, plus the data pipeline around it.
//!
//! ```text
//! EpochSet (.eege) -> binarize valence -> subject-disjoint split
//!   -> standardize -> fit (Adam, early stopping on val loss, checkpoint)
//!   -> MetricsReport (accuracy, F1, confusion)
//! ```
//!
//! Modules:
//!
//! - [`numerics`]: [`Tensor`], the [`Real`] scalar trait, seeded [`Rng`]
//! - [`nn`]: layer forward passes, vector-Jacobian products, gradient checker
//! - [`model`]: architecture, parameters, network passes, checkpoint files
//! - [`train`]: Adam, epochs, early stopping with best-checkpoint restore
//! - [`data`]: epoch files, labels, splits, filtering, synthetic EEG
//! - [`eval`]: accuracy / F1 / confusion, bandpower baseline

mod codec;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod numerics;
pub mod train;

pub use data::{EpochSet, LabeledEpochs, LabeledSplit};
pub use error::{Error, Result};
pub use eval::MetricsReport;

pub use model::{ArchConfig, ModelParams};
pub use numerics::{Real, Rng, Tensor};
pub use train::{FitReport, TrainConfig};
