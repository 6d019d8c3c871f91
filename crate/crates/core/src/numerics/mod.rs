//! Dense tensors, the scalar trait they are generic over, and the seeded
//! random number generator shared by every stochastic component.

mod rng;
mod tensor;

pub use rng::{rng_normal, Rng};
pub use tensor::{matmul, DType, Real, Tensor};
