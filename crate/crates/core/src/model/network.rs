//! Forward and backward passes of the full network.
//!
//! Layer stack, for input `[N, 1, C, T]`:
//!
//! ```text
//! conv2d(F1, [1, K], same) -> BN
//!   -> depthwise([C, 1], D, valid) -> BN -> ELU -> avgpool(pool1) -> dropout
//!   -> separable(sep_kernel, F2) -> BN -> ELU -> avgpool(pool2) -> dropout
//!   -> flatten -> dense(units) -> ReLU -> dense(classes)      (softmax in the loss)
//! ```

use super::params::{slot, Gradients, ModelParams};
use crate::error::{shape_err, Result};
use crate::nn::{
    avgpool_forward, batchnorm_forward, conv2d_forward, dense_forward, depthwise_conv2d_forward,
    dropout_forward, elu_forward, relu_forward, separable_conv2d_forward, softmax, AvgPoolCtx,
    BatchNormConfig, BatchNormCtx, Conv2dCtx, DenseCtx, DepthwiseCtx, DropoutCtx, EluCtx, Mode,
    Padding, ReluCtx, RunningStats, SeparableCtx,
};
use crate::numerics::{Real, Rng, Tensor};

/// Train mode consumes the generator for dropout masks only.
pub enum Phase<'a> {
    Train(&'a mut Rng),
    Infer,
}

impl Phase<'_> {
    fn mode(&self) -> Mode {
        match self {
            Phase::Train(_) => Mode::Train,
            Phase::Infer => Mode::Infer,
        }
    }
}

/// Saved contexts of one forward pass, consumed by [`ForwardTrace::backward`].
#[derive(Debug)]
pub struct ForwardTrace<T: Real> {
    temporal: Conv2dCtx<T>,
    bn1: BatchNormCtx<T>,
    spatial: DepthwiseCtx<T>,
    bn2: BatchNormCtx<T>,
    elu1: EluCtx<T>,
    pool1: AvgPoolCtx,
    drop1: DropoutCtx<T>,
    separable: SeparableCtx<T>,
    bn3: BatchNormCtx<T>,
    elu2: EluCtx<T>,
    pool2: AvgPoolCtx,
    drop2: DropoutCtx<T>,
    pooled_shape: Vec<usize>,
    hidden: DenseCtx<T>,
    relu: ReluCtx<T>,
    head: DenseCtx<T>,
    running: [RunningStats<T>; 3],
    pre_activations: [Tensor<T>; 3],
}

fn bn_group<T: Real>(p: &ModelParams<T>, base: usize) -> (&Tensor<T>, &Tensor<T>, RunningStats<T>) {
    (
        p.tensor(base + slot::GAMMA),
        p.tensor(base + slot::BETA),
        RunningStats {
            mean: p.tensor(base + slot::RUNNING_MEAN).clone(),
            var: p.tensor(base + slot::RUNNING_VAR).clone(),
        },
    )
}

/// Logits `[N, n_classes]` and the trace needed for backpropagation.
pub fn forward<T: Real>(
    params: &ModelParams<T>,
    x: &Tensor<T>,
    mut phase: Phase<'_>,
) -> Result<(Tensor<T>, ForwardTrace<T>)> {
    let arch = params.arch();
    let [n, one, c, t] = x.dims4("forward")?;
    if one != 1 || c != arch.n_channels || t != arch.n_samples {
        return Err(shape_err(
            "forward",
            format!("[N, 1, {}, {}]", arch.n_channels, arch.n_samples),
            format!("{:?}", x.shape()),
        ));
    }
    let mode = phase.mode();
    let bn_cfg = BatchNormConfig::default();
    let p_drop = arch.dropout_p as f64;
    let mut infer_rng = Rng::new(0);
    let rng: &mut Rng = match &mut phase {
        Phase::Train(r) => r,
        Phase::Infer => &mut infer_rng,
    };

    let (h, temporal) = conv2d_forward(x, params.tensor(slot::TEMPORAL_KERNEL), Padding::Same)?;
    let temporal = temporal.without_input_grad();
    let (g, b, r) = bn_group(params, slot::BN1);
    let (h, bn1, run1) = batchnorm_forward(&h, g, b, &r, mode, bn_cfg)?;

    let (h, spatial) = depthwise_conv2d_forward(&h, params.tensor(slot::SPATIAL_KERNEL))?;
    let (g, b, r) = bn_group(params, slot::BN2);
    let (pre1, bn2, run2) = batchnorm_forward(&h, g, b, &r, mode, bn_cfg)?;
    let (h, elu1) = elu_forward(&pre1);
    let (h, pool1) = avgpool_forward(&h, arch.pool1)?;
    let (h, drop1) = dropout_forward(&h, p_drop, mode, rng)?;

    let (h, separable) = separable_conv2d_forward(
        &h,
        params.tensor(slot::SEP_DEPTH_KERNEL),
        params.tensor(slot::SEP_POINT_KERNEL),
    )?;
    let (g, b, r) = bn_group(params, slot::BN3);
    let (pre2, bn3, run3) = batchnorm_forward(&h, g, b, &r, mode, bn_cfg)?;
    let (h, elu2) = elu_forward(&pre2);
    let (h, pool2) = avgpool_forward(&h, arch.pool2)?;
    let (h, drop2) = dropout_forward(&h, p_drop, mode, rng)?;

    let pooled_shape = h.shape().to_vec();
    let flat = h.into_reshape(&[n, arch.flat_features()])?;
    let (pre3, hidden) = dense_forward(
        &flat,
        params.tensor(slot::HIDDEN_WEIGHT),
        params.tensor(slot::HIDDEN_BIAS),
    )?;
    let (h, relu) = relu_forward(&pre3);
    let (logits, head) = dense_forward(
        &h,
        params.tensor(slot::HEAD_WEIGHT),
        params.tensor(slot::HEAD_BIAS),
    )?;

    let trace = ForwardTrace {
        temporal,
        bn1,
        spatial,
        bn2,
        elu1,
        pool1,
        drop1,
        separable,
        bn3,
        elu2,
        pool2,
        drop2,
        pooled_shape,
        hidden,
        relu,
        head,
        running: [run1, run2, run3],
        pre_activations: [pre1, pre2, pre3],
    };
    Ok((logits, trace))
}

/// Inference-mode logits.
pub fn infer<T: Real>(params: &ModelParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    forward(params, x, Phase::Infer).map(|(logits, _)| logits)
}

/// Row-wise argmax; ties go to the lower class index.
pub fn argmax_rows<T: Real>(logits: &Tensor<T>) -> Result<Vec<usize>> {
    let [_, k] = logits.dims2("argmax")?;
    Ok(logits
        .data()
        .chunks_exact(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect())
}

/// Predicted class per trial: `0 = Low`, `1 = High` for the valence head.
pub fn predict<T: Real>(params: &ModelParams<T>, x: &Tensor<T>) -> Result<Vec<usize>> {
    argmax_rows(&softmax(&infer(params, x)?)?)
}

impl<T: Real> ForwardTrace<T> {
    /// Running statistics produced by this pass, in `bn1, bn2, bn3` order.
    pub fn running_stats(&self) -> &[RunningStats<T>; 3] {
        &self.running
    }

    /// Inputs of the three nonlinearities (two ELUs and the ReLU).
    pub fn pre_activations(&self) -> &[Tensor<T>; 3] {
        &self.pre_activations
    }

    /// Write the running statistics of this pass into `params`.
    pub fn commit_running_stats(&self, params: &mut ModelParams<T>) {
        for (stats, base) in self.running.iter().zip([slot::BN1, slot::BN2, slot::BN3]) {
            *params.tensor_mut(base + slot::RUNNING_MEAN) = stats.mean.clone();
            *params.tensor_mut(base + slot::RUNNING_VAR) = stats.var.clone();
        }
    }

    /// Gradients of every trainable tensor given `d loss / d logits`.
    pub fn backward(self, grad_logits: &Tensor<T>) -> Result<Gradients<T>> {
        let head = self.head.backward(grad_logits)?;
        let g = self.relu.backward(&head.input)?;
        let hidden = self.hidden.backward(&g)?;
        let g = hidden.input.into_reshape(&self.pooled_shape)?;

        let g = self.drop2.backward(&g)?;
        let g = self.pool2.backward(&g)?;
        let g = self.elu2.backward(&g)?;
        let bn3 = self.bn3.backward(&g)?;
        let sep = self.separable.backward(&bn3.input)?;

        let g = self.drop1.backward(&sep.input)?;
        let g = self.pool1.backward(&g)?;
        let g = self.elu1.backward(&g)?;
        let bn2 = self.bn2.backward(&g)?;
        let spatial = self.spatial.backward(&bn2.input)?;

        let bn1 = self.bn1.backward(&spatial.input)?;
        let temporal = self.temporal.backward(&bn1.input)?;

        Ok(Gradients(vec![
            temporal.kernel,
            bn1.gamma,
            bn1.beta,
            spatial.kernel,
            bn2.gamma,
            bn2.beta,
            sep.depth_kernel,
            sep.point_kernel,
            bn3.gamma,
            bn3.beta,
            hidden.weight,
            hidden.bias,
            head.weight,
            head.bias,
        ]))
    }
}
