//! Layer forward passes and their exact vector-Jacobian products.
//!
//! Every forward function returns its output together with a context value
//! that owns whatever the backward pass needs. Backward consumes the context,
//! so a context can be used at most once. Tensors use `[N, C, H, W]` layout;
//! for EEG the height axis is the electrode axis and the width axis is time.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
pub mod gradcheck;
mod loss;
mod pool;

pub use activation::{elu, elu_forward, relu, relu_forward, EluCtx, ReluCtx};
pub use batchnorm::{
    batchnorm_forward, BatchNormConfig, BatchNormCtx, BatchNormGrads, RunningStats,
};
pub use conv::{
    conv2d_forward, depthwise_conv2d_forward, depthwise_conv2d_forward_padded,
    separable_conv2d_forward, Conv2dCtx, Conv2dGrads, DepthwiseCtx, DepthwiseGrads, SeparableCtx,
    SeparableGrads,
};
pub use dense::{dense_forward, DenseCtx, DenseGrads};
pub use dropout::{dropout_forward, DropoutCtx};
pub use loss::{softmax, softmax_xent, SoftmaxXent};
pub use pool::{avgpool_forward, AvgPoolCtx};

use crate::error::Result;
use crate::numerics::{Real, Tensor};

/// Spatial padding of a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output keeps the input size. For an even kernel the odd zero goes on
    /// the trailing side.
    Same,
    Valid,
}

impl Padding {
    /// Zeros inserted before the first input sample along an axis.
    pub fn leading(self, kernel: usize) -> usize {
        match self {
            Padding::Same => (kernel - 1) / 2,
            Padding::Valid => 0,
        }
    }

    /// Output length along an axis, `None` when the kernel does not fit.
    pub fn output_len(self, input: usize, kernel: usize) -> Option<usize> {
        match self {
            Padding::Same => Some(input),
            Padding::Valid => input.checked_sub(kernel).map(|d| d + 1),
        }
    }
}

/// Train or inference behaviour of stochastic / batch-statistic layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Kernel geometry of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub padding: Padding,
    /// Only meaningful for depthwise layers.
    pub depth_multiplier: usize,
}

impl ConvSpec {
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let oh = self.padding.output_len(h, self.kernel_h)?;
        let ow = self.padding.output_len(w, self.kernel_w)?;
        (oh >= 1 && ow >= 1).then_some((oh, ow))
    }
}

/// Saved state of any layer, for code that handles layers uniformly.
#[derive(Debug)]
pub enum LayerContext<T: Real> {
    Conv2d(Conv2dCtx<T>),
    Depthwise(DepthwiseCtx<T>),
    Separable(SeparableCtx<T>),
    BatchNorm(BatchNormCtx<T>),
    AvgPool(AvgPoolCtx),
    Dropout(DropoutCtx<T>),
    Dense(DenseCtx<T>),
    Elu(EluCtx<T>),
    Relu(ReluCtx<T>),
}

/// Gradient of a layer with respect to its input and its parameters, the
/// latter in the order the forward function takes them.
#[derive(Debug, Clone)]
pub struct LayerGrads<T: Real> {
    pub input: Tensor<T>,
    pub params: Vec<Tensor<T>>,
}

/// Backward pass of whichever layer produced `ctx`.
pub fn layer_backward<T: Real>(
    ctx: LayerContext<T>,
    cotangent: &Tensor<T>,
) -> Result<LayerGrads<T>> {
    let (input, params) = match ctx {
        LayerContext::Conv2d(c) => {
            let g = c.backward(cotangent)?;
            (g.input.expect("input gradient requested"), vec![g.kernel])
        }
        LayerContext::Depthwise(c) => {
            let g = c.backward(cotangent)?;
            (g.input, vec![g.kernel])
        }
        LayerContext::Separable(c) => {
            let g = c.backward(cotangent)?;
            (g.input, vec![g.depth_kernel, g.point_kernel])
        }
        LayerContext::BatchNorm(c) => {
            let g = c.backward(cotangent)?;
            (g.input, vec![g.gamma, g.beta])
        }
        LayerContext::AvgPool(c) => (c.backward(cotangent)?, vec![]),
        LayerContext::Dropout(c) => (c.backward(cotangent)?, vec![]),
        LayerContext::Dense(c) => {
            let g = c.backward(cotangent)?;
            (g.input, vec![g.weight, g.bias])
        }
        LayerContext::Elu(c) => (c.backward(cotangent)?, vec![]),
        LayerContext::Relu(c) => (c.backward(cotangent)?, vec![]),
    };
    Ok(LayerGrads { input, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_rules() {
        assert_eq!(Padding::Same.leading(64), 31);
        assert_eq!(Padding::Same.leading(3), 1);
        assert_eq!(Padding::Same.output_len(875, 64), Some(875));
        assert_eq!(Padding::Valid.output_len(128, 128), Some(1));
        assert_eq!(Padding::Valid.output_len(4, 3), Some(2));
        assert_eq!(Padding::Valid.output_len(2, 3), None);
    }

    #[test]
    fn conv_spec_output() {
        let spec = ConvSpec {
            out_channels: 8,
            kernel_h: 1,
            kernel_w: 64,
            padding: Padding::Same,
            depth_multiplier: 1,
        };
        assert_eq!(spec.output_hw(128, 875), Some((128, 875)));
        let dw = ConvSpec {
            kernel_h: 128,
            kernel_w: 1,
            padding: Padding::Valid,
            ..spec
        };
        assert_eq!(dw.output_hw(128, 875), Some((1, 875)));
        assert_eq!(dw.output_hw(64, 875), None);
    }
}
