//! The network: architecture constants, parameter registry, forward/backward
//! passes and checkpoint files.

mod arch;
mod checkpoint;
mod network;
mod params;

pub use arch::ArchConfig;
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use network::{argmax_rows, forward, infer, predict, ForwardTrace, Phase};
pub use params::{slot, Gradients, ModelParams, Param, ParamKind};

use crate::error::Result;
use crate::numerics::Rng;

/// Freshly initialized `f32` parameters for `arch`.
pub fn build_model(arch: &ArchConfig, rng: &mut Rng) -> Result<ModelParams> {
    ModelParams::init(arch, rng)
}
