//! Inputs shared by the benchmarks.

use sten_core::data::{generate_synthetic, standardize, LabeledEpochs};
use sten_core::numerics::rng_normal;
use sten_core::{Rng, Tensor};

pub fn normal(shape: &[usize], seed: u64) -> Tensor<f32> {
    rng_normal(&mut Rng::new(seed), shape, 0.0, 1.0).expect("positive shape")
}

/// Standardized synthetic trials at the reduced 16 x 250 geometry.
pub fn synthetic_batch(trials: usize, seed: u64) -> LabeledEpochs {
    let es = generate_synthetic(1, trials, 16, 250, 125.0, seed).expect("valid counts");
    LabeledEpochs::from_epochs(standardize(&es)).expect("ratings in range")
}
