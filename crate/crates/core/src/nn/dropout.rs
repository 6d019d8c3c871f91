use super::Mode;
use crate::error::{invalid, shape_err, Result};
use crate::numerics::{Real, Rng, Tensor};

#[derive(Debug)]
pub struct DropoutCtx<T: Real> {
    shape: Vec<usize>,
    /// Per-element multiplier (`0` or `1 / (1 - p)`); `None` at inference.
    mask: Option<Vec<T>>,
}

impl<T: Real> DropoutCtx<T> {
    /// Context that applies a fixed multiplier mask, used to gradient-check
    /// the train-mode path with a frozen mask.
    pub fn with_mask(mask: &Tensor<T>) -> Self {
        Self {
            shape: mask.shape().to_vec(),
            mask: Some(mask.data().to_vec()),
        }
    }

    pub fn mask(&self) -> Option<Tensor<T>> {
        self.mask
            .as_ref()
            .map(|m| Tensor::from_vec(&self.shape, m.clone()).expect("mask matches its shape"))
    }

    pub fn backward(self, cot: &Tensor<T>) -> Result<Tensor<T>> {
        if cot.shape() != self.shape.as_slice() {
            return Err(shape_err(
                "dropout backward",
                format!("cotangent {:?}", self.shape),
                format!("{:?}", cot.shape()),
            ));
        }
        match self.mask {
            None => Ok(cot.clone()),
            Some(m) => Tensor::from_vec(
                &self.shape,
                cot.data().iter().zip(&m).map(|(&g, &k)| g * k).collect(),
            ),
        }
    }
}

/// Inverted dropout: in train mode each entry is zeroed with probability `p`
/// and survivors are scaled by `1 / (1 - p)`; inference is the identity.
pub fn dropout_forward<T: Real>(
    x: &Tensor<T>,
    p: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Tensor<T>, DropoutCtx<T>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(invalid(format!("dropout rate must be in [0, 1), got {p}")));
    }
    match mode {
        Mode::Infer => Ok((
            x.clone(),
            DropoutCtx {
                shape: x.shape().to_vec(),
                mask: None,
            },
        )),
        Mode::Train => {
            let keep = T::of(1.0 / (1.0 - p));
            let mask: Vec<T> = (0..x.len())
                .map(|_| if rng.uniform() < p { T::zero() } else { keep })
                .collect();
            let y = x.data().iter().zip(&mask).map(|(&v, &k)| v * k).collect();
            Ok((
                Tensor::from_vec(x.shape(), y)?,
                DropoutCtx {
                    shape: x.shape().to_vec(),
                    mask: Some(mask),
                },
            ))
        }
    }
}
