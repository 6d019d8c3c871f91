//! Central finite-difference gradient checking in double precision.
//!
//! For a coordinate `θ` the step is `h = 1e-3 * max(1, |θ|)` and the
//! reported error is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`,
//! maximised over every input and parameter coordinate (the whole-network
//! check uses [`Settings::NETWORK`] instead). Layers are probed
//! through the scalar `<g, f(θ)>` with a random cotangent `g`.
//!
//! Inputs to ReLU (and to ELU in the single-layer checks) are kept at least
//! [`KINK_MARGIN`] away from zero so that no finite-difference step straddles
//! the non-smooth point.

use std::fmt;

use super::*;
use crate::error::{Error, Result};
use crate::model::{self, ArchConfig, ModelParams, Phase};
use crate::numerics::{rng_normal, Rng, Tensor};

pub const TOLERANCE: f64 = 1e-4;
pub const KINK_MARGIN: f64 = 0.05;
const MAX_RESAMPLES: usize = 10_000;

/// Layers and compositions covered by the checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckedLayer {
    Conv2d,
    Depthwise,
    Separable,
    BatchNormTrain,
    AvgPool,
    DropoutMasked,
    Dense,
    Elu,
    Relu,
    SoftmaxXent,
    /// conv2d -> batchnorm (train) -> ELU -> avgpool
    ConvBlock,
    /// The whole network with a tiny architecture, train mode, fixed masks,
    /// checked at [`Settings::NETWORK`].
    Network,
}

impl CheckedLayer {
    pub const ALL: [CheckedLayer; 12] = [
        CheckedLayer::Conv2d,
        CheckedLayer::Depthwise,
        CheckedLayer::Separable,
        CheckedLayer::BatchNormTrain,
        CheckedLayer::AvgPool,
        CheckedLayer::DropoutMasked,
        CheckedLayer::Dense,
        CheckedLayer::Elu,
        CheckedLayer::Relu,
        CheckedLayer::SoftmaxXent,
        CheckedLayer::ConvBlock,
        CheckedLayer::Network,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckedLayer::Conv2d => "conv2d",
            CheckedLayer::Depthwise => "depthwise",
            CheckedLayer::Separable => "separable",
            CheckedLayer::BatchNormTrain => "batchnorm-train",
            CheckedLayer::AvgPool => "avgpool",
            CheckedLayer::DropoutMasked => "dropout-masked",
            CheckedLayer::Dense => "dense",
            CheckedLayer::Elu => "elu",
            CheckedLayer::Relu => "relu",
            CheckedLayer::SoftmaxXent => "softmax-xent",
            CheckedLayer::ConvBlock => "conv-bn-elu-pool",
            CheckedLayer::Network => "network",
        }
    }

    /// Input shape used by [`gradcheck_suite`].
    pub fn default_input_shape(self) -> Vec<usize> {
        match self {
            CheckedLayer::Conv2d => vec![2, 2, 3, 7],
            CheckedLayer::Depthwise => vec![2, 3, 4, 5],
            CheckedLayer::Separable => vec![2, 3, 1, 9],
            CheckedLayer::BatchNormTrain => vec![4, 3, 2, 3],
            CheckedLayer::AvgPool => vec![2, 2, 1, 9],
            CheckedLayer::DropoutMasked => vec![3, 10],
            CheckedLayer::Dense => vec![3, 4],
            CheckedLayer::Elu | CheckedLayer::Relu => vec![3, 7],
            CheckedLayer::SoftmaxXent => vec![4, 3],
            CheckedLayer::ConvBlock => vec![3, 1, 2, 12],
            CheckedLayer::Network => vec![4, 1, 3, 32],
        }
    }
}

impl fmt::Display for CheckedLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Finite-difference step and relative-error floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    /// `h = step_scale * max(1, |θ|)`
    pub step_scale: f64,
    pub denom_floor: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            step_scale: 1e-3,
            denom_floor: 1e-8,
        }
    }
}

impl Settings {
    /// Used for the whole-network check. Three stacked batch norms make the
    /// default step's truncation error visible on small gradient components,
    /// and some gradients (the first batch-norm shift, which the next batch
    /// norm cancels) are zero up to roundoff, hence the larger floor.
    pub const NETWORK: Settings = Settings {
        step_scale: 1e-5,
        denom_floor: 1e-6,
    };
}

/// Compare analytic gradients of a scalar objective with central differences
/// at the default [`Settings`]. Returns the maximum relative error.
pub fn check_gradients(
    objective: impl Fn(&[Tensor<f64>]) -> Result<f64>,
    point: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    names: &[&str],
) -> Result<f64> {
    check_gradients_with(Settings::default(), objective, point, analytic, names)
}

pub fn check_gradients_with(
    settings: Settings,
    objective: impl Fn(&[Tensor<f64>]) -> Result<f64>,
    point: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    names: &[&str],
) -> Result<f64> {
    if point.len() != analytic.len() || point.len() != names.len() {
        return Err(Error::InvalidArgument(format!(
            "gradcheck: {} tensors, {} gradients, {} names",
            point.len(),
            analytic.len(),
            names.len()
        )));
    }
    let mut worst = 0.0f64;
    let mut probe = point.to_vec();
    for (t, (grad, name)) in analytic.iter().zip(names).enumerate() {
        if grad.shape() != point[t].shape() {
            return Err(Error::Shape {
                op: "gradcheck",
                expected: format!("{name} gradient {:?}", point[t].shape()),
                got: format!("{:?}", grad.shape()),
            });
        }
        for i in 0..point[t].len() {
            let theta = point[t].data()[i];
            let h = settings.step_scale * theta.abs().max(1.0);
            probe[t].data_mut()[i] = theta + h;
            let up = objective(&probe)?;
            probe[t].data_mut()[i] = theta - h;
            let down = objective(&probe)?;
            probe[t].data_mut()[i] = theta;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[i];
            if !(numeric.is_finite() && a.is_finite()) {
                return Err(Error::NonFinite {
                    what: format!("gradcheck of {name}[{i}] (analytic {a}, numeric {numeric})"),
                });
            }
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(settings.denom_floor);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn normal(rng: &mut Rng, shape: &[usize]) -> Result<Tensor<f64>> {
    rng_normal(rng, shape, 0.0, 1.0)
}

/// Normal draws pushed at least `KINK_MARGIN` away from zero.
fn off_kink(rng: &mut Rng, shape: &[usize]) -> Result<Tensor<f64>> {
    Ok(normal(rng, shape)?.map(|v| v + KINK_MARGIN.copysign(v)))
}

fn clear_of_kink(t: &Tensor<f64>) -> bool {
    t.data().iter().all(|v| v.abs() > KINK_MARGIN)
}

/// Probe a layer `f(inputs) -> y` with vector-Jacobian `vjp(inputs, g)`.
fn probe_layer(
    rng: &mut Rng,
    inputs: Vec<Tensor<f64>>,
    names: &[&str],
    forward: impl Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
    vjp: impl Fn(&[Tensor<f64>], &Tensor<f64>) -> Result<Vec<Tensor<f64>>>,
) -> Result<f64> {
    let y = forward(&inputs)?;
    let cot = normal(rng, y.shape())?;
    let analytic = vjp(&inputs, &cot)?;
    check_gradients(|p| forward(p)?.dot(&cot), &inputs, &analytic, names)
}

fn grads(g: LayerGrads<f64>) -> Vec<Tensor<f64>> {
    std::iter::once(g.input).chain(g.params).collect()
}

/// Maximum relative gradient error of `layer` at the given input shape.
pub fn gradcheck(layer: CheckedLayer, input_shape: &[usize], rng: &mut Rng) -> Result<f64> {
    let shape = input_shape;
    let bn_cfg = BatchNormConfig::default();
    match layer {
        CheckedLayer::Conv2d => {
            let cin = shape[1];
            let inputs = vec![normal(rng, shape)?, normal(rng, &[2, cin, 2, 3])?];
            probe_layer(
                rng,
                inputs,
                &["x", "kernel"],
                |p| Ok(conv2d_forward(&p[0], &p[1], Padding::Same)?.0),
                |p, g| {
                    Ok(grads(layer_backward(
                        LayerContext::Conv2d(conv2d_forward(&p[0], &p[1], Padding::Same)?.1),
                        g,
                    )?))
                },
            )
        }
        CheckedLayer::Depthwise => {
            let (c, h) = (shape[1], shape[2]);
            let inputs = vec![normal(rng, shape)?, normal(rng, &[c, 2, h, 2])?];
            probe_layer(
                rng,
                inputs,
                &["x", "kernel"],
                |p| Ok(depthwise_conv2d_forward(&p[0], &p[1])?.0),
                |p, g| {
                    Ok(grads(layer_backward(
                        LayerContext::Depthwise(depthwise_conv2d_forward(&p[0], &p[1])?.1),
                        g,
                    )?))
                },
            )
        }
        CheckedLayer::Separable => {
            let c = shape[1];
            let inputs = vec![
                normal(rng, shape)?,
                normal(rng, &[c, 1, 1, 4])?,
                normal(rng, &[4, c, 1, 1])?,
            ];
            probe_layer(
                rng,
                inputs,
                &["x", "depth_kernel", "point_kernel"],
                |p| Ok(separable_conv2d_forward(&p[0], &p[1], &p[2])?.0),
                |p, g| {
                    let ctx = separable_conv2d_forward(&p[0], &p[1], &p[2])?.1;
                    Ok(grads(layer_backward(LayerContext::Separable(ctx), g)?))
                },
            )
        }
        CheckedLayer::BatchNormTrain => {
            let c = shape[1];
            let running = RunningStats::fresh(c)?;
            let inputs = vec![
                rng_normal(rng, shape, 0.5, 2.0)?,
                rng_normal(rng, &[c], 1.0, 0.3)?,
                normal(rng, &[c])?,
            ];
            let run = |p: &[Tensor<f64>]| {
                batchnorm_forward(&p[0], &p[1], &p[2], &running, Mode::Train, bn_cfg)
            };
            probe_layer(
                rng,
                inputs,
                &["x", "gamma", "beta"],
                |p| Ok(run(p)?.0),
                |p, g| {
                    Ok(grads(layer_backward(
                        LayerContext::BatchNorm(run(p)?.1),
                        g,
                    )?))
                },
            )
        }
        CheckedLayer::AvgPool => {
            let inputs = vec![normal(rng, shape)?];
            probe_layer(
                rng,
                inputs,
                &["x"],
                |p| Ok(avgpool_forward(&p[0], 4)?.0),
                |p, g| {
                    Ok(grads(layer_backward(
                        LayerContext::AvgPool(avgpool_forward(&p[0], 4)?.1),
                        g,
                    )?))
                },
            )
        }
        CheckedLayer::DropoutMasked => {
            let x = normal(rng, shape)?;
            let (_, ctx) = dropout_forward(&x, 0.5, Mode::Train, rng)?;
            let mask = ctx.mask().expect("train mode keeps a mask");
            let apply = |p: &[Tensor<f64>]| -> Result<Tensor<f64>> {
                Tensor::from_vec(
                    p[0].shape(),
                    p[0].data()
                        .iter()
                        .zip(mask.data())
                        .map(|(a, m)| a * m)
                        .collect(),
                )
            };
            probe_layer(rng, vec![x], &["x"], apply, |_, g| {
                Ok(grads(layer_backward(
                    LayerContext::Dropout(DropoutCtx::with_mask(&mask)),
                    g,
                )?))
            })
        }
        CheckedLayer::Dense => {
            let f = shape[1];
            let inputs = vec![
                normal(rng, shape)?,
                normal(rng, &[f, 3])?,
                normal(rng, &[3])?,
            ];
            probe_layer(
                rng,
                inputs,
                &["x", "weight", "bias"],
                |p| Ok(dense_forward(&p[0], &p[1], &p[2])?.0),
                |p, g| {
                    Ok(grads(layer_backward(
                        LayerContext::Dense(dense_forward(&p[0], &p[1], &p[2])?.1),
                        g,
                    )?))
                },
            )
        }
        CheckedLayer::Elu => {
            let inputs = vec![off_kink(rng, shape)?];
            probe_layer(
                rng,
                inputs,
                &["x"],
                |p| Ok(elu(&p[0])),
                |p, g| {
                    Ok(grads(layer_backward(
                        LayerContext::Elu(elu_forward(&p[0]).1),
                        g,
                    )?))
                },
            )
        }
        CheckedLayer::Relu => {
            let inputs = vec![off_kink(rng, shape)?];
            probe_layer(
                rng,
                inputs,
                &["x"],
                |p| Ok(relu(&p[0])),
                |p, g| {
                    Ok(grads(layer_backward(
                        LayerContext::Relu(relu_forward(&p[0]).1),
                        g,
                    )?))
                },
            )
        }
        CheckedLayer::SoftmaxXent => {
            let [n, k] = [shape[0], shape[1]];
            let logits = rng_normal(rng, shape, 0.0, 2.0)?;
            let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
            let analytic = softmax_xent(&logits, &labels)?.grad;
            check_gradients(
                |p| Ok(softmax_xent(&p[0], &labels)?.loss),
                &[logits],
                &[analytic],
                &["logits"],
            )
        }
        CheckedLayer::ConvBlock => check_conv_block(shape, rng),
        CheckedLayer::Network => check_network(shape, rng),
    }
}

fn check_conv_block(shape: &[usize], rng: &mut Rng) -> Result<f64> {
    let cin = shape[1];
    let f = 2;
    let running = RunningStats::fresh(f)?;
    let cfg = BatchNormConfig::default();
    let pre_elu = |p: &[Tensor<f64>]| -> Result<_> {
        let (h, c1) = conv2d_forward(&p[0], &p[1], Padding::Same)?;
        let (h, c2, _) = batchnorm_forward(&h, &p[2], &p[3], &running, Mode::Train, cfg)?;
        Ok((h, c1, c2))
    };
    let forward = |p: &[Tensor<f64>]| -> Result<Tensor<f64>> {
        let (h, _, _) = pre_elu(p)?;
        Ok(avgpool_forward(&elu(&h), 3)?.0)
    };
    for _ in 0..MAX_RESAMPLES {
        let inputs = vec![
            normal(rng, shape)?,
            normal(rng, &[f, cin, 1, 4])?,
            rng_normal(rng, &[f], 1.0, 0.2)?,
            rng_normal(rng, &[f], 0.0, 0.5)?,
        ];
        if !clear_of_kink(&pre_elu(&inputs)?.0) {
            continue;
        }
        return probe_layer(
            rng,
            inputs,
            &["x", "kernel", "gamma", "beta"],
            forward,
            |p, g| {
                let (h, c1, c2) = pre_elu(p)?;
                let (a, c3) = elu_forward(&h);
                let (_, c4) = avgpool_forward(&a, 3)?;
                let g = c4.backward(g)?;
                let g = c3.backward(&g)?;
                let bn = c2.backward(&g)?;
                let conv = c1.backward(&bn.input)?;
                Ok(vec![
                    conv.input.expect("requested"),
                    conv.kernel,
                    bn.gamma,
                    bn.beta,
                ])
            },
        );
    }
    Err(Error::InvalidArgument(
        "gradcheck: could not draw a kink-free conv block".into(),
    ))
}

fn tiny_arch(shape: &[usize]) -> ArchConfig {
    ArchConfig {
        n_channels: shape[2],
        n_samples: shape[3],
        f1: 2,
        depth_multiplier: 2,
        f2: 3,
        temporal_kernel: 5,
        sep_kernel: 3,
        pool1: 2,
        pool2: 2,
        dropout_p: 0.25,
        dense_units: 5,
        n_classes: 2,
        maxnorm_depthwise: None,
        maxnorm_dense: None,
    }
}

fn check_network(shape: &[usize], rng: &mut Rng) -> Result<f64> {
    let arch = tiny_arch(shape);
    let n = shape[0];
    for _ in 0..MAX_RESAMPLES {
        let mut params = ModelParams::<f64>::init(&arch, rng)?;
        // non-trivial affine batch-norm parameters
        for base in [model::slot::BN1, model::slot::BN2, model::slot::BN3] {
            *params.tensor_mut(base + model::slot::GAMMA) =
                rng_normal(rng, &[params.tensor(base).len()], 1.0, 0.2)?;
            *params.tensor_mut(base + model::slot::BETA) =
                rng_normal(rng, &[params.tensor(base).len()], 0.0, 0.3)?;
        }
        let x = normal(rng, shape)?;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mask_seed = rng.next_u64();

        let (logits, trace) = model::forward(&params, &x, Phase::Train(&mut Rng::new(mask_seed)))?;
        // ELU is continuously differentiable at zero; only the ReLU input
        // must stay clear of its kink.
        if !clear_of_kink(&trace.pre_activations()[2]) {
            continue;
        }
        let loss = softmax_xent(&logits, &labels)?;
        let analytic = trace.backward(&loss.grad)?.0;

        let trainable: Vec<usize> = params
            .params()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.kind == model::ParamKind::Trainable)
            .map(|(i, _)| i)
            .collect();
        let names: Vec<&str> = trainable
            .iter()
            .map(|&i| params.params()[i].name.as_str())
            .collect();
        let point: Vec<Tensor<f64>> = trainable
            .iter()
            .map(|&i| params.tensor(i).clone())
            .collect();
        let objective = |p: &[Tensor<f64>]| -> Result<f64> {
            let mut q = params.clone();
            for (&slot, t) in trainable.iter().zip(p) {
                *q.tensor_mut(slot) = t.clone();
            }
            let (logits, _) = model::forward(&q, &x, Phase::Train(&mut Rng::new(mask_seed)))?;
            Ok(softmax_xent(&logits, &labels)?.loss)
        };
        return check_gradients_with(Settings::NETWORK, objective, &point, &analytic, &names);
    }
    Err(Error::InvalidArgument(
        "gradcheck: could not draw a kink-free network".into(),
    ))
}

/// Run every [`CheckedLayer`] at its default shape.
pub fn gradcheck_suite(rng: &mut Rng) -> Result<Vec<(CheckedLayer, f64)>> {
    CheckedLayer::ALL
        .iter()
        .map(|&layer| Ok((layer, gradcheck(layer, &layer.default_input_shape(), rng)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_random_3x4() {
        let err = gradcheck(CheckedLayer::Dense, &[3, 4], &mut Rng::new(1)).unwrap();
        assert!(err < TOLERANCE, "{err}");
    }

    #[test]
    fn conv_block() {
        let err = gradcheck(CheckedLayer::ConvBlock, &[3, 1, 2, 12], &mut Rng::new(2)).unwrap();
        assert!(err < TOLERANCE, "{err}");
    }

    #[test]
    fn every_layer_below_tolerance_for_several_seeds() {
        for seed in [7, 11, 12345] {
            for (layer, err) in gradcheck_suite(&mut Rng::new(seed)).unwrap() {
                assert!(err < TOLERANCE, "seed {seed} {layer}: {err}");
            }
        }
    }

    #[test]
    fn mutated_gradient_is_detected() {
        let mut rng = Rng::new(3);
        let x = normal(&mut rng, &[3, 4]).unwrap();
        let w = normal(&mut rng, &[4, 2]).unwrap();
        let b = normal(&mut rng, &[2]).unwrap();
        let (y, ctx) = dense_forward(&x, &w, &b).unwrap();
        let cot = normal(&mut rng, y.shape()).unwrap();
        let g = ctx.backward(&cot).unwrap();
        let objective = |p: &[Tensor<f64>]| dense_forward(&p[0], &p[1], &p[2])?.0.dot(&cot);
        let point = [x, w, b];
        let honest = [g.input.clone(), g.weight.clone(), g.bias.clone()];
        assert!(check_gradients(objective, &point, &honest, &["x", "w", "b"]).unwrap() < TOLERANCE);
        let mut weight = g.weight.clone();
        weight.data_mut()[3] *= 1.01;
        let mutated = [g.input, weight, g.bias];
        let err = check_gradients(objective, &point, &mutated, &["x", "w", "b"]).unwrap();
        assert!(err > 1e-3, "{err}");
    }

    #[test]
    fn non_finite_objective_names_coordinate() {
        let point = [Tensor::from_vec(&[2], vec![0.0, 1.0]).unwrap()];
        let analytic = [Tensor::from_vec(&[2], vec![0.0, 0.0]).unwrap()];
        let err = check_gradients(
            |p| Ok(if p[0].data()[1] > 1.0 { f64::NAN } else { 0.0 }),
            &point,
            &analytic,
            &["theta"],
        )
        .unwrap_err();
        assert!(err.to_string().contains("theta[1]"), "{err}");
    }
}
