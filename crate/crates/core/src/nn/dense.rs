use crate::error::{shape_err, Result};
use crate::numerics::{matmul, Real, Tensor};

#[derive(Debug)]
pub struct DenseCtx<T: Real> {
    input: Tensor<T>,
    weight: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T: Real> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// `y = x · w + b` with `x [N,F]`, `w [F,U]`, `b [U]`.
pub fn dense_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<(Tensor<T>, DenseCtx<T>)> {
    let [_, f] = x.dims2("dense")?;
    let [wf, u] = w.dims2("dense")?;
    if wf != f {
        return Err(shape_err(
            "dense",
            format!("weight [{f}, _]"),
            format!("{:?}", w.shape()),
        ));
    }
    if b.shape() != [u] {
        return Err(shape_err(
            "dense",
            format!("bias [{u}]"),
            format!("{:?}", b.shape()),
        ));
    }
    let mut y = matmul(x, w)?;
    for row in y.data_mut().chunks_exact_mut(u) {
        for (v, &bv) in row.iter_mut().zip(b.data()) {
            *v = *v + bv;
        }
    }
    Ok((
        y,
        DenseCtx {
            input: x.clone(),
            weight: w.clone(),
        },
    ))
}

impl<T: Real> DenseCtx<T> {
    pub fn backward(self, cot: &Tensor<T>) -> Result<DenseGrads<T>> {
        let [n, _] = self.input.dims2("dense")?;
        let [_, u] = self.weight.dims2("dense")?;
        if cot.shape() != [n, u] {
            return Err(shape_err(
                "dense backward",
                format!("cotangent [{n}, {u}]"),
                format!("{:?}", cot.shape()),
            ));
        }
        let input = matmul(cot, &self.weight.transpose2()?)?;
        let weight = matmul(&self.input.transpose2()?, cot)?;
        let mut bias = vec![T::zero(); u];
        for row in cot.data().chunks_exact(u) {
            for (acc, &g) in bias.iter_mut().zip(row) {
                *acc = *acc + g;
            }
        }
        Ok(DenseGrads {
            input,
            weight,
            bias: Tensor::from_vec(&[u], bias)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0f32, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap();
        let mut eye = Tensor::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1.0;
        }
        let (y, ctx) = dense_forward(&x, &eye, &Tensor::zeros(&[3]).unwrap()).unwrap();
        assert_eq!(y, x);
        let g = Tensor::from_vec(&[2, 3], vec![0.1f32, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(ctx.backward(&g).unwrap().input, g);
    }

    #[test]
    fn hand_computation() {
        let x = Tensor::from_vec(&[1, 2], vec![1.0f64, 2.0]).unwrap();
        let w = Tensor::from_vec(&[2, 1], vec![1.0, 1.0]).unwrap();
        let b = Tensor::from_vec(&[1], vec![3.0]).unwrap();
        let (y, _) = dense_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[6.0]);
    }

    #[test]
    fn flattened_eeg_shape_and_mismatch() {
        let x = Tensor::<f32>::zeros(&[16, 432]).unwrap();
        let w = Tensor::<f32>::zeros(&[432, 64]).unwrap();
        let b = Tensor::<f32>::zeros(&[64]).unwrap();
        let (y, _) = dense_forward(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[16, 64]);
        let bad = Tensor::<f32>::zeros(&[431, 64]).unwrap();
        assert!(dense_forward(&x, &bad, &b).is_err());
        assert!(dense_forward(&x, &w, &Tensor::zeros(&[63]).unwrap()).is_err());
    }
}
