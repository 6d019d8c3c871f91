use crate::error::{invalid, shape_err, Result};
use crate::numerics::{Real, Tensor};

#[derive(Debug)]
pub struct AvgPoolCtx {
    in_shape: [usize; 4],
    pool: usize,
}

/// Non-overlapping average pooling along the width (time) axis. Trailing
/// samples that do not fill a window are dropped.
pub fn avgpool_forward<T: Real>(x: &Tensor<T>, pool_w: usize) -> Result<(Tensor<T>, AvgPoolCtx)> {
    let [n, c, h, w] = x.dims4("avgpool")?;
    if pool_w == 0 || pool_w > w {
        return Err(invalid(format!(
            "avgpool width {pool_w} must be in 1..={w}"
        )));
    }
    let ow = w / pool_w;
    let scale = T::one() / T::of(pool_w as f64);
    let xd = x.data();
    let mut y = Vec::with_capacity(n * c * h * ow);
    for row in xd.chunks_exact(w) {
        for win in row[..ow * pool_w].chunks_exact(pool_w) {
            y.push(win.iter().fold(T::zero(), |a, &v| a + v) * scale);
        }
    }
    Ok((
        Tensor::from_vec(&[n, c, h, ow], y)?,
        AvgPoolCtx {
            in_shape: [n, c, h, w],
            pool: pool_w,
        },
    ))
}

impl AvgPoolCtx {
    pub fn backward<T: Real>(self, cot: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, c, h, w] = self.in_shape;
        let ow = w / self.pool;
        if cot.shape() != [n, c, h, ow] {
            return Err(shape_err(
                "avgpool backward",
                format!("cotangent {:?}", [n, c, h, ow]),
                format!("{:?}", cot.shape()),
            ));
        }
        let scale = T::one() / T::of(self.pool as f64);
        let mut gx = vec![T::zero(); n * c * h * w];
        for (grow, xrow) in cot.data().chunks_exact(ow).zip(gx.chunks_exact_mut(w)) {
            for (g, win) in grow.iter().zip(xrow.chunks_exact_mut(self.pool)) {
                win.fill(*g * scale);
            }
        }
        Tensor::from_vec(&self.in_shape, gx)
    }
}
