use crate::error::{shape_err, Result};
use crate::numerics::{Real, Tensor};

/// ELU with alpha = 1.
pub fn elu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { v.exp_m1() })
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

#[derive(Debug)]
pub struct EluCtx<T: Real> {
    input: Tensor<T>,
}

#[derive(Debug)]
pub struct ReluCtx<T: Real> {
    input: Tensor<T>,
}

pub fn elu_forward<T: Real>(x: &Tensor<T>) -> (Tensor<T>, EluCtx<T>) {
    (elu(x), EluCtx { input: x.clone() })
}

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> (Tensor<T>, ReluCtx<T>) {
    (relu(x), ReluCtx { input: x.clone() })
}

fn elementwise_backward<T: Real>(
    op: &'static str,
    input: &Tensor<T>,
    cot: &Tensor<T>,
    slope: impl Fn(T) -> T,
) -> Result<Tensor<T>> {
    if cot.shape() != input.shape() {
        return Err(shape_err(
            op,
            format!("cotangent {:?}", input.shape()),
            format!("{:?}", cot.shape()),
        ));
    }
    Tensor::from_vec(
        input.shape(),
        input
            .data()
            .iter()
            .zip(cot.data())
            .map(|(&x, &g)| g * slope(x))
            .collect(),
    )
}

impl<T: Real> EluCtx<T> {
    pub fn backward(self, cot: &Tensor<T>) -> Result<Tensor<T>> {
        elementwise_backward("elu backward", &self.input, cot, |x| {
            if x > T::zero() {
                T::one()
            } else {
                x.exp()
            }
        })
    }
}

impl<T: Real> ReluCtx<T> {
    pub fn backward(self, cot: &Tensor<T>) -> Result<Tensor<T>> {
        elementwise_backward("relu backward", &self.input, cot, |x| {
            if x > T::zero() {
                T::one()
            } else {
                T::zero()
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::scalar(v)
    }

    #[test]
    fn pointwise_values() {
        assert_eq!(elu(&scalar(0.0)).data(), &[0.0]);
        assert_eq!(relu(&scalar(0.0)).data(), &[0.0]);
        assert_eq!(elu(&scalar(2.0)).data(), &[2.0]);
        assert_eq!(relu(&scalar(-3.0)).data(), &[0.0]);
        let e = elu(&scalar(-1.0)).data()[0];
        assert!((e - (-0.632_120_558_828_557_7)).abs() < 1e-12);
    }

    #[test]
    fn slopes() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.5, -0.0]).unwrap();
        let g = Tensor::full(&[3], 2.0).unwrap();
        let (_, ctx) = elu_forward(&x);
        let ge = ctx.backward(&g).unwrap();
        assert!((ge.data()[0] - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(ge.data()[1], 2.0);
        let (_, ctx) = relu_forward(&x);
        assert_eq!(ctx.backward(&g).unwrap().data(), &[0.0, 2.0, 0.0]);
    }
}
