//! Per-channel batch normalization over `[N, C, H, W]`.

use super::Mode;
use crate::error::{invalid, shape_err, Result};
use crate::numerics::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchNormConfig {
    /// Weight of the old running value: `running = momentum * running + (1 - momentum) * batch`.
    pub momentum: f64,
    pub eps: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        Self {
            momentum: 0.99,
            eps: 1e-3,
        }
    }
}

/// Running mean and (biased) variance per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T: Real> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

impl<T: Real> RunningStats<T> {
    pub fn fresh(channels: usize) -> Result<Self> {
        Ok(Self {
            mean: Tensor::zeros(&[channels])?,
            var: Tensor::full(&[channels], T::one())?,
        })
    }
}

#[derive(Debug)]
pub struct BatchNormCtx<T: Real> {
    shape: [usize; 4],
    /// Normalized input `(x - mu) / sqrt(var + eps)`.
    xhat: Vec<T>,
    inv_std: Vec<f64>,
    gamma: Tensor<T>,
    mode: Mode,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T: Real> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// Returns the normalized output, the backward context, and the running
/// statistics after this call (unchanged in [`Mode::Infer`]).
pub fn batchnorm_forward<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &RunningStats<T>,
    mode: Mode,
    cfg: BatchNormConfig,
) -> Result<(Tensor<T>, BatchNormCtx<T>, RunningStats<T>)> {
    let [n, c, h, w] = x.dims4("batchnorm")?;
    for (name, t) in [
        ("gamma", gamma),
        ("beta", beta),
        ("running mean", &running.mean),
        ("running var", &running.var),
    ] {
        if t.shape() != [c] {
            return Err(shape_err(
                "batchnorm",
                format!("{name} [{c}]"),
                format!("{:?}", t.shape()),
            ));
        }
    }
    let plane = h * w;
    let count = n * plane;
    if mode == Mode::Train && count < 2 {
        return Err(invalid(format!(
            "train-mode batchnorm needs at least 2 values per channel, got {count}"
        )));
    }
    let xd = x.data();
    let channel_values = |ch: usize| {
        (0..n).flat_map(move |b| {
            xd[(b * c + ch) * plane..(b * c + ch + 1) * plane]
                .iter()
                .map(|v| v.f64())
        })
    };

    let mut mean = vec![0.0f64; c];
    let mut var = vec![0.0f64; c];
    let mut new_running = running.clone();
    match mode {
        Mode::Train => {
            for ch in 0..c {
                let mu = channel_values(ch).sum::<f64>() / count as f64;
                let v = channel_values(ch).map(|v| (v - mu) * (v - mu)).sum::<f64>() / count as f64;
                mean[ch] = mu;
                var[ch] = v;
            }
            let m = cfg.momentum;
            for ch in 0..c {
                let rm = &mut new_running.mean.data_mut()[ch];
                *rm = T::of(m * rm.f64() + (1.0 - m) * mean[ch]);
                let rv = &mut new_running.var.data_mut()[ch];
                *rv = T::of(m * rv.f64() + (1.0 - m) * var[ch]);
            }
        }
        Mode::Infer => {
            for ch in 0..c {
                mean[ch] = running.mean.data()[ch].f64();
                var[ch] = running.var.data()[ch].f64();
            }
        }
    }

    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + cfg.eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); xd.len()];
    let mut y = vec![T::zero(); xd.len()];
    for b in 0..n {
        for ch in 0..c {
            let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
            let (mu, is) = (T::of(mean[ch]), T::of(inv_std[ch]));
            let r = (b * c + ch) * plane..(b * c + ch + 1) * plane;
            for ((xh, yo), &xv) in xhat[r.clone()]
                .iter_mut()
                .zip(&mut y[r.clone()])
                .zip(&xd[r])
            {
                *xh = (xv - mu) * is;
                *yo = g * *xh + bt;
            }
        }
    }
    let ctx = BatchNormCtx {
        shape: [n, c, h, w],
        xhat,
        inv_std,
        gamma: gamma.clone(),
        mode,
    };
    Ok((Tensor::from_vec(x.shape(), y)?, ctx, new_running))
}

impl<T: Real> BatchNormCtx<T> {
    pub fn backward(self, cot: &Tensor<T>) -> Result<BatchNormGrads<T>> {
        let [n, c, h, w] = self.shape;
        if cot.shape() != self.shape {
            return Err(shape_err(
                "batchnorm backward",
                format!("cotangent {:?}", self.shape),
                format!("{:?}", cot.shape()),
            ));
        }
        let plane = h * w;
        let count = (n * plane) as f64;
        let gd = cot.data();
        let mut dgamma = vec![0.0f64; c];
        let mut dbeta = vec![0.0f64; c];
        for b in 0..n {
            for ch in 0..c {
                let r = (b * c + ch) * plane..(b * c + ch + 1) * plane;
                for (&g, &xh) in gd[r.clone()].iter().zip(&self.xhat[r]) {
                    dbeta[ch] += g.f64();
                    dgamma[ch] += g.f64() * xh.f64();
                }
            }
        }
        let mut dx = vec![T::zero(); gd.len()];
        for b in 0..n {
            for ch in 0..c {
                let gam = self.gamma.data()[ch].f64();
                let is = self.inv_std[ch];
                let r = (b * c + ch) * plane..(b * c + ch + 1) * plane;
                for ((o, &g), &xh) in dx[r.clone()]
                    .iter_mut()
                    .zip(&gd[r.clone()])
                    .zip(&self.xhat[r])
                {
                    let v = match self.mode {
                        // d/dx through the batch mean and variance
                        Mode::Train => {
                            gam * is * (g.f64() - dbeta[ch] / count - xh.f64() * dgamma[ch] / count)
                        }
                        Mode::Infer => gam * is * g.f64(),
                    };
                    *o = T::of(v);
                }
            }
        }
        let to_tensor = |v: Vec<f64>| Tensor::from_vec(&[c], v.into_iter().map(T::of).collect());
        Ok(BatchNormGrads {
            input: Tensor::from_vec(&self.shape, dx)?,
            gamma: to_tensor(dgamma)?,
            beta: to_tensor(dbeta)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rng_normal, Rng};

    fn ones(c: usize) -> Tensor<f64> {
        Tensor::full(&[c], 1.0).unwrap()
    }

    fn zeros(c: usize) -> Tensor<f64> {
        Tensor::zeros(&[c]).unwrap()
    }

    #[test]
    fn two_values_normalize_to_plus_minus_one() {
        let x = Tensor::from_vec(&[2, 1, 1, 1], vec![1.0, 3.0]).unwrap();
        let cfg = BatchNormConfig::default();
        let (y, _, _) = batchnorm_forward(
            &x,
            &ones(1),
            &zeros(1),
            &RunningStats::fresh(1).unwrap(),
            Mode::Train,
            cfg,
        )
        .unwrap();
        let expect = 1.0 / (1.0f64 + cfg.eps).sqrt();
        assert!((y.data()[0] + expect).abs() < 1e-12);
        assert!((y.data()[1] - expect).abs() < 1e-12);
    }

    #[test]
    fn constant_input_maps_to_beta_zero() {
        let x = Tensor::full(&[4, 2, 1, 3], 7.5).unwrap();
        let (y, _, _) = batchnorm_forward(
            &x,
            &ones(2),
            &zeros(2),
            &RunningStats::fresh(2).unwrap(),
            Mode::Train,
            BatchNormConfig::default(),
        )
        .unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn infer_with_identity_statistics() {
        let mut rng = Rng::new(3);
        let x: Tensor<f64> = rng_normal(&mut rng, &[3, 2, 2, 2], 0.0, 2.0).unwrap();
        let cfg = BatchNormConfig::default();
        let running = RunningStats::fresh(2).unwrap();
        let (y, _, after) =
            batchnorm_forward(&x, &ones(2), &zeros(2), &running, Mode::Infer, cfg).unwrap();
        assert_eq!(after, running);
        let s = 1.0 / (1.0f64 + cfg.eps).sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * s).abs() < 1e-12);
        }
    }

    #[test]
    fn single_element_train_batch_rejected() {
        let x = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let r = batchnorm_forward(
            &x,
            &ones(1),
            &zeros(1),
            &RunningStats::fresh(1).unwrap(),
            Mode::Train,
            BatchNormConfig::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn running_stats_update_rule() {
        let x = Tensor::from_vec(&[2, 1, 1, 2], vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let cfg = BatchNormConfig::default();
        let (_, _, r) = batchnorm_forward(
            &x,
            &ones(1),
            &zeros(1),
            &RunningStats::fresh(1).unwrap(),
            Mode::Train,
            cfg,
        )
        .unwrap();
        // batch mean 3, biased var (4 + 1 + 0 + 9) / 4 = 3.5
        assert!((r.mean.data()[0] - 0.01 * 3.0).abs() < 1e-12);
        assert!((r.var.data()[0] - (0.99 + 0.01 * 3.5)).abs() < 1e-12);
    }

    #[test]
    fn train_output_is_standardized_per_channel() {
        let mut rng = Rng::new(12);
        let x: Tensor<f32> = rng_normal(&mut rng, &[8, 3, 2, 5], 4.0, 3.0).unwrap();
        let g = Tensor::full(&[3], 1.0f32).unwrap();
        let b = Tensor::zeros(&[3]).unwrap();
        let (y, _, _) = batchnorm_forward(
            &x,
            &g,
            &b,
            &RunningStats::fresh(3).unwrap(),
            Mode::Train,
            BatchNormConfig::default(),
        )
        .unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..8)
                .flat_map(|n| {
                    let plane = &y.data()[(n * 3 + ch) * 10..(n * 3 + ch + 1) * 10];
                    plane.iter().map(|v| *v as f64).collect::<Vec<_>>()
                })
                .collect();
            let mu = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mu.abs() < 1e-5, "mean {mu}");
            // eps shrinks the variance by var / (var + eps)
            assert!((var - 1.0).abs() < 1e-3, "var {var}");
        }
    }
}
