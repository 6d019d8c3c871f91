use crate::error::{shape_err, Error, Result};
use crate::model::{Gradients, ModelParams};
use crate::numerics::{Real, Tensor};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter tensor, and the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Real = f32> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new<'a>(shapes: impl IntoIterator<Item = &'a [usize]>) -> Result<Self> {
        let m = shapes
            .into_iter()
            .map(Tensor::zeros)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            v: m.clone(),
            m,
            t: 0,
        })
    }

    /// Zero moments for the trainable tensors of `params`.
    pub fn for_model(params: &ModelParams<T>) -> Result<Self> {
        Self::new(params.trainable().map(|p| p.tensor.shape()))
    }
}

/// One Adam update of `params` in place. Every gradient is checked for
/// non-finite values before anything is modified. Arithmetic is done in
/// `f64` and rounded once into `T`.
pub fn adam_update<T: Real>(
    params: &mut [(&str, &mut Tensor<T>)],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(shape_err(
            "adam",
            format!("{} tensors", params.len()),
            format!("{} grads, {} moments", grads.len(), state.m.len()),
        ));
    }
    for (((name, p), g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(shape_err(
                "adam",
                format!("{name} {:?}", p.shape()),
                format!("{:?}", g.shape()),
            ));
        }
        if !g.all_finite() {
            return Err(Error::NonFinite {
                what: format!("gradient of {name}"),
            });
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, (_, p)) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, theta) in p.data_mut().iter_mut().enumerate() {
            let gj = g[j].f64();
            let mj = cfg.beta1 * m[j].f64() + (1.0 - cfg.beta1) * gj;
            let vj = cfg.beta2 * v[j].f64() + (1.0 - cfg.beta2) * gj * gj;
            m[j] = T::of(mj);
            v[j] = T::of(vj);
            let step = cfg.lr * (mj / c1) / ((vj / c2).sqrt() + cfg.eps);
            *theta = T::of(theta.f64() - step);
        }
    }
    Ok(())
}

/// [`adam_update`] over the trainable tensors of a model.
pub fn adam_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    let mut named: Vec<(&str, &mut Tensor<T>)> = params
        .trainable_mut()
        .map(|p| (p.name.as_str(), &mut p.tensor))
        .collect();
    adam_update(&mut named, &grads.0, state, cfg)
}
