use super::ArchConfig;
use crate::error::{shape_err, Result};
use crate::numerics::{Real, Rng, Tensor};

/// Whether the optimizer updates a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Trainable,
    /// Batch-norm running statistic, updated by train-mode forward passes.
    Running,
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
}

/// Fixed slot of every tensor in [`ModelParams`], in definition order.
pub mod slot {
    pub const TEMPORAL_KERNEL: usize = 0;
    pub const BN1: usize = 1;
    pub const SPATIAL_KERNEL: usize = 5;
    pub const BN2: usize = 6;
    pub const SEP_DEPTH_KERNEL: usize = 10;
    pub const SEP_POINT_KERNEL: usize = 11;
    pub const BN3: usize = 12;
    pub const HIDDEN_WEIGHT: usize = 16;
    pub const HIDDEN_BIAS: usize = 17;
    pub const HEAD_WEIGHT: usize = 18;
    pub const HEAD_BIAS: usize = 19;
    pub const COUNT: usize = 20;

    /// Offsets inside a batch-norm group.
    pub const GAMMA: usize = 0;
    pub const BETA: usize = 1;
    pub const RUNNING_MEAN: usize = 2;
    pub const RUNNING_VAR: usize = 3;
}

struct Spec {
    name: String,
    shape: Vec<usize>,
    kind: ParamKind,
    init: Init,
}

fn layout(cfg: &ArchConfig) -> Vec<Spec> {
    let (f1, fd, f2) = (cfg.f1, cfg.spatial_filters(), cfg.f2);
    let (c, k, sk) = (cfg.n_channels, cfg.temporal_kernel, cfg.sep_kernel);
    let (flat, units, classes) = (cfg.flat_features(), cfg.dense_units, cfg.n_classes);
    let trainable = |name: &str, shape: Vec<usize>, init| Spec {
        name: name.to_string(),
        shape,
        kind: ParamKind::Trainable,
        init,
    };
    let bn = |prefix: &str, ch: usize| {
        [
            ("gamma", ParamKind::Trainable, Init::Ones),
            ("beta", ParamKind::Trainable, Init::Zeros),
            ("running_mean", ParamKind::Running, Init::Zeros),
            ("running_var", ParamKind::Running, Init::Ones),
        ]
        .map(|(suffix, kind, init)| Spec {
            name: format!("{prefix}.{suffix}"),
            shape: vec![ch],
            kind,
            init,
        })
    };
    // Glorot fans follow the usual conv convention: receptive field times
    // input (resp. output) channels; a depthwise kernel's output side is its
    // depth multiplier.
    let mut specs = vec![trainable(
        "temporal.kernel",
        vec![f1, 1, 1, k],
        Init::Glorot {
            fan_in: k,
            fan_out: k * f1,
        },
    )];
    specs.extend(bn("bn1", f1));
    specs.push(trainable(
        "spatial.kernel",
        vec![f1, cfg.depth_multiplier, c, 1],
        Init::Glorot {
            fan_in: c * f1,
            fan_out: c * cfg.depth_multiplier,
        },
    ));
    specs.extend(bn("bn2", fd));
    specs.push(trainable(
        "separable.depth_kernel",
        vec![fd, 1, 1, sk],
        Init::Glorot {
            fan_in: sk * fd,
            fan_out: sk,
        },
    ));
    specs.push(trainable(
        "separable.point_kernel",
        vec![f2, fd, 1, 1],
        Init::Glorot {
            fan_in: fd,
            fan_out: f2,
        },
    ));
    specs.extend(bn("bn3", f2));
    specs.push(trainable(
        "hidden.weight",
        vec![flat, units],
        Init::Glorot {
            fan_in: flat,
            fan_out: units,
        },
    ));
    specs.push(trainable("hidden.bias", vec![units], Init::Zeros));
    specs.push(trainable(
        "head.weight",
        vec![units, classes],
        Init::Glorot {
            fan_in: units,
            fan_out: classes,
        },
    ));
    specs.push(trainable("head.bias", vec![classes], Init::Zeros));
    debug_assert_eq!(specs.len(), slot::COUNT);
    specs
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T: Real> {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor<T>,
}

/// Every tensor of a network, in fixed definition order:
///
/// `temporal.kernel`, `bn1.{gamma,beta,running_mean,running_var}`,
/// `spatial.kernel`, `bn2.*`, `separable.depth_kernel`,
/// `separable.point_kernel`, `bn3.*`, `hidden.{weight,bias}`,
/// `head.{weight,bias}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Real = f32> {
    arch: ArchConfig,
    params: Vec<Param<T>>,
}

/// Gradients of the trainable tensors, in the same order as
/// [`ModelParams::trainable`].
#[derive(Debug, Clone)]
pub struct Gradients<T: Real = f32>(pub Vec<Tensor<T>>);

impl<T: Real> ModelParams<T> {
    /// Glorot-uniform kernels, unit gammas, zero betas and biases, fresh
    /// running statistics; max-norm limits applied to the initial draw.
    pub fn init(arch: &ArchConfig, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let mut params = Vec::with_capacity(slot::COUNT);
        for spec in layout(arch) {
            let n: usize = spec.shape.iter().product();
            let data = match spec.init {
                Init::Zeros => vec![T::zero(); n],
                Init::Ones => vec![T::one(); n],
                Init::Glorot { fan_in, fan_out } => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..n)
                        .map(|_| T::of(rng.uniform_range(-limit, limit)))
                        .collect()
                }
            };
            params.push(Param {
                name: spec.name,
                kind: spec.kind,
                tensor: Tensor::from_vec(&spec.shape, data)?,
            });
        }
        let mut out = Self {
            arch: arch.clone(),
            params,
        };
        out.apply_maxnorm();
        Ok(out)
    }

    /// Rebuild from named tensors, checking names and shapes against `arch`.
    pub fn from_named(arch: &ArchConfig, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        arch.validate()?;
        let specs = layout(arch);
        if tensors.len() != specs.len() {
            return Err(shape_err(
                "model params",
                format!("{} tensors", specs.len()),
                format!("{}", tensors.len()),
            ));
        }
        let mut params = Vec::with_capacity(specs.len());
        for (spec, (name, tensor)) in specs.into_iter().zip(tensors) {
            if name != spec.name {
                return Err(shape_err("model params", spec.name, name));
            }
            if tensor.shape() != spec.shape.as_slice() {
                return Err(shape_err(
                    "model params",
                    format!("{name} {:?}", spec.shape),
                    format!("{:?}", tensor.shape()),
                ));
            }
            params.push(Param {
                name,
                kind: spec.kind,
                tensor,
            });
        }
        Ok(Self {
            arch: arch.clone(),
            params,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn tensor(&self, slot: usize) -> &Tensor<T> {
        &self.params[slot].tensor
    }

    pub fn tensor_mut(&mut self, slot: usize) -> &mut Tensor<T> {
        &mut self.params[slot].tensor
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.tensor)
    }

    pub fn trainable(&self) -> impl Iterator<Item = &Param<T>> {
        self.params
            .iter()
            .filter(|p| p.kind == ParamKind::Trainable)
    }

    pub fn trainable_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params
            .iter_mut()
            .filter(|p| p.kind == ParamKind::Trainable)
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable().map(|p| p.tensor.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            arch: self.arch.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    kind: p.kind,
                    tensor: p.tensor.cast(),
                })
                .collect(),
        }
    }

    /// Project constrained weight groups back into their L2 balls: every
    /// `(f, d)` spatial filter to `maxnorm_depthwise`, every head weight
    /// column to `maxnorm_dense`. Groups already inside (up to 1e-6) are
    /// left untouched bit for bit.
    pub fn apply_maxnorm(&mut self) {
        if let Some(limit) = self.arch.maxnorm_depthwise {
            let group = self.arch.n_channels;
            let kernel = self.tensor_mut(slot::SPATIAL_KERNEL).data_mut();
            for filter in kernel.chunks_exact_mut(group) {
                project(filter.iter_mut(), limit as f64);
            }
        }
        if let Some(limit) = self.arch.maxnorm_dense {
            let classes = self.arch.n_classes;
            let w = self.tensor_mut(slot::HEAD_WEIGHT).data_mut();
            for col in 0..classes {
                project(w.iter_mut().skip(col).step_by(classes), limit as f64);
            }
        }
    }
}

const MAXNORM_SLACK: f64 = 1e-6;

fn project<'a, T: Real>(group: impl Iterator<Item = &'a mut T>, limit: f64) {
    let mut group: Vec<&mut T> = group.collect();
    let norm = group.iter().map(|v| v.f64() * v.f64()).sum::<f64>().sqrt();
    if norm > limit + MAXNORM_SLACK {
        let scale = T::of(limit / norm);
        for v in group.iter_mut() {
            **v = **v * scale;
        }
    }
}
