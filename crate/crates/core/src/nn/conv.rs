//! Regular, depthwise and separable 2-D cross-correlation (no kernel flip,
//! no bias).

use super::Padding;
use crate::error::{shape_err, Result};
use crate::numerics::{Real, Tensor};

/// Geometry of one input plane correlated with one kernel plane.
#[derive(Debug, Clone, Copy)]
struct PlaneGeom {
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    kh: usize,
    kw: usize,
    top: usize,
    left: usize,
}

impl PlaneGeom {
    fn new(
        op: &'static str,
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
        padding: Padding,
    ) -> Result<Self> {
        let oh = padding.output_len(h, kh);
        let ow = padding.output_len(w, kw);
        match (oh, ow) {
            (Some(oh), Some(ow)) if oh >= 1 && ow >= 1 => Ok(Self {
                h,
                w,
                oh,
                ow,
                kh,
                kw,
                top: padding.leading(kh),
                left: padding.leading(kw),
            }),
            _ => Err(shape_err(
                op,
                format!("kernel {kh}x{kw} no larger than padded input"),
                format!("input {h}x{w} with {padding:?} padding"),
            )),
        }
    }

    fn in_len(&self) -> usize {
        self.h * self.w
    }

    fn out_len(&self) -> usize {
        self.oh * self.ow
    }

    /// Output rows and columns whose tap `(i, j)` lands inside the input.
    #[inline]
    fn span(&self, i: usize, j: usize) -> (usize, usize, usize, usize) {
        let row_lo = self.top.saturating_sub(i);
        let row_hi = self.oh.min((self.h + self.top).saturating_sub(i));
        let col_lo = self.left.saturating_sub(j);
        let col_hi = self.ow.min((self.w + self.left).saturating_sub(j));
        (row_lo, row_hi, col_lo, col_hi)
    }

    /// `out += x ⋆ k`
    fn correlate<T: Real>(&self, out: &mut [T], x: &[T], k: &[T]) {
        for i in 0..self.kh {
            for j in 0..self.kw {
                let kv = k[i * self.kw + j];
                let (r0, r1, c0, c1) = self.span(i, j);
                if c0 >= c1 {
                    continue;
                }
                for r in r0..r1 {
                    let ir = r + i - self.top;
                    let xs = &x[ir * self.w + c0 + j - self.left..ir * self.w + c1 + j - self.left];
                    let ys = &mut out[r * self.ow + c0..r * self.ow + c1];
                    for (y, &xv) in ys.iter_mut().zip(xs) {
                        *y = *y + kv * xv;
                    }
                }
            }
        }
    }

    /// `gx += adjoint of correlate(·, k) applied to g`
    fn input_grad<T: Real>(&self, gx: &mut [T], g: &[T], k: &[T]) {
        for i in 0..self.kh {
            for j in 0..self.kw {
                let kv = k[i * self.kw + j];
                let (r0, r1, c0, c1) = self.span(i, j);
                if c0 >= c1 {
                    continue;
                }
                for r in r0..r1 {
                    let ir = r + i - self.top;
                    let gs = &g[r * self.ow + c0..r * self.ow + c1];
                    let xs =
                        &mut gx[ir * self.w + c0 + j - self.left..ir * self.w + c1 + j - self.left];
                    for (xg, &gv) in xs.iter_mut().zip(gs) {
                        *xg = *xg + kv * gv;
                    }
                }
            }
        }
    }

    /// `gk += g ⋆ x` (gradient of the kernel plane)
    fn kernel_grad<T: Real>(&self, gk: &mut [T], g: &[T], x: &[T]) {
        for i in 0..self.kh {
            for j in 0..self.kw {
                let (r0, r1, c0, c1) = self.span(i, j);
                if c0 >= c1 {
                    continue;
                }
                let mut acc = T::zero();
                for r in r0..r1 {
                    let ir = r + i - self.top;
                    let gs = &g[r * self.ow + c0..r * self.ow + c1];
                    let xs = &x[ir * self.w + c0 + j - self.left..ir * self.w + c1 + j - self.left];
                    acc = acc
                        + gs.iter()
                            .zip(xs)
                            .fold(T::zero(), |a, (&gv, &xv)| a + gv * xv);
                }
                gk[i * self.kw + j] = gk[i * self.kw + j] + acc;
            }
        }
    }
}

fn check_cotangent<T: Real>(op: &'static str, cot: &Tensor<T>, shape: &[usize]) -> Result<()> {
    if cot.shape() != shape {
        return Err(shape_err(
            op,
            format!("cotangent {shape:?}"),
            format!("{:?}", cot.shape()),
        ));
    }
    Ok(())
}

#[derive(Debug)]
pub struct Conv2dCtx<T: Real> {
    input: Tensor<T>,
    kernel: Tensor<T>,
    geom: PlaneGeom,
    out_shape: [usize; 4],
    input_grad: bool,
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads<T: Real> {
    /// `None` when the context was built with [`Conv2dCtx::without_input_grad`].
    pub input: Option<Tensor<T>>,
    pub kernel: Tensor<T>,
}

/// Full cross-correlation `x [N,Cin,H,W] ⋆ kernel [Cout,Cin,kh,kw]`.
pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    padding: Padding,
) -> Result<(Tensor<T>, Conv2dCtx<T>)> {
    let [n, cin, h, w] = x.dims4("conv2d")?;
    let [cout, kcin, kh, kw] = kernel.dims4("conv2d")?;
    if kcin != cin {
        return Err(shape_err(
            "conv2d",
            format!("kernel input channels {cin}"),
            format!("{kcin}"),
        ));
    }
    let geom = PlaneGeom::new("conv2d", h, w, kh, kw, padding)?;
    let (ilen, olen, klen) = (geom.in_len(), geom.out_len(), kh * kw);
    let mut y = vec![T::zero(); n * cout * olen];
    let (xd, kd) = (x.data(), kernel.data());
    for b in 0..n {
        for co in 0..cout {
            let out = &mut y[(b * cout + co) * olen..(b * cout + co + 1) * olen];
            for ci in 0..cin {
                geom.correlate(
                    out,
                    &xd[(b * cin + ci) * ilen..(b * cin + ci + 1) * ilen],
                    &kd[(co * cin + ci) * klen..(co * cin + ci + 1) * klen],
                );
            }
        }
    }
    let out_shape = [n, cout, geom.oh, geom.ow];
    let y = Tensor::from_vec(&out_shape, y)?;
    let ctx = Conv2dCtx {
        input: x.clone(),
        kernel: kernel.clone(),
        geom,
        out_shape,
        input_grad: true,
    };
    Ok((y, ctx))
}

impl<T: Real> Conv2dCtx<T> {
    /// Skip the input gradient; used for the first layer of a network.
    pub fn without_input_grad(mut self) -> Self {
        self.input_grad = false;
        self
    }

    pub fn backward(self, cot: &Tensor<T>) -> Result<Conv2dGrads<T>> {
        check_cotangent("conv2d backward", cot, &self.out_shape)?;
        let [n, cin, _, _] = self.input.dims4("conv2d")?;
        let [cout, _, kh, kw] = self.kernel.dims4("conv2d")?;
        let geom = self.geom;
        let (ilen, olen, klen) = (geom.in_len(), geom.out_len(), kh * kw);
        let (xd, kd, gd) = (self.input.data(), self.kernel.data(), cot.data());
        let mut gk = vec![T::zero(); cout * cin * klen];
        let mut gx = if self.input_grad {
            vec![T::zero(); n * cin * ilen]
        } else {
            Vec::new()
        };
        for b in 0..n {
            for co in 0..cout {
                let g = &gd[(b * cout + co) * olen..(b * cout + co + 1) * olen];
                for ci in 0..cin {
                    let xr = (b * cin + ci) * ilen..(b * cin + ci + 1) * ilen;
                    let kr = (co * cin + ci) * klen..(co * cin + ci + 1) * klen;
                    geom.kernel_grad(&mut gk[kr.clone()], g, &xd[xr.clone()]);
                    if self.input_grad {
                        geom.input_grad(&mut gx[xr], g, &kd[kr]);
                    }
                }
            }
        }
        let input = if self.input_grad {
            Some(Tensor::from_vec(self.input.shape(), gx)?)
        } else {
            None
        };
        Ok(Conv2dGrads {
            input,
            kernel: Tensor::from_vec(self.kernel.shape(), gk)?,
        })
    }
}

#[derive(Debug)]
pub struct DepthwiseCtx<T: Real> {
    input: Tensor<T>,
    kernel: Tensor<T>,
    geom: PlaneGeom,
    out_shape: [usize; 4],
}

#[derive(Debug, Clone)]
pub struct DepthwiseGrads<T: Real> {
    pub input: Tensor<T>,
    pub kernel: Tensor<T>,
}

/// Depthwise correlation with valid padding: `kernel [C,D,kh,kw]`, output
/// channel `c*D + d` sees only input channel `c`.
pub fn depthwise_conv2d_forward<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
) -> Result<(Tensor<T>, DepthwiseCtx<T>)> {
    depthwise_conv2d_forward_padded(x, kernel, Padding::Valid)
}

/// Depthwise correlation with an explicit padding mode.
pub fn depthwise_conv2d_forward_padded<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    padding: Padding,
) -> Result<(Tensor<T>, DepthwiseCtx<T>)> {
    let [n, c, h, w] = x.dims4("depthwise_conv2d")?;
    let [kc, d, kh, kw] = kernel.dims4("depthwise_conv2d")?;
    if kc != c {
        return Err(shape_err(
            "depthwise_conv2d",
            format!("kernel channels {c}"),
            format!("{kc}"),
        ));
    }
    let geom = PlaneGeom::new("depthwise_conv2d", h, w, kh, kw, padding)?;
    let (ilen, olen, klen) = (geom.in_len(), geom.out_len(), kh * kw);
    let cout = c * d;
    let mut y = vec![T::zero(); n * cout * olen];
    let (xd, kd) = (x.data(), kernel.data());
    for b in 0..n {
        for ci in 0..c {
            let xs = &xd[(b * c + ci) * ilen..(b * c + ci + 1) * ilen];
            for m in 0..d {
                let co = ci * d + m;
                geom.correlate(
                    &mut y[(b * cout + co) * olen..(b * cout + co + 1) * olen],
                    xs,
                    &kd[co * klen..(co + 1) * klen],
                );
            }
        }
    }
    let out_shape = [n, cout, geom.oh, geom.ow];
    Ok((
        Tensor::from_vec(&out_shape, y)?,
        DepthwiseCtx {
            input: x.clone(),
            kernel: kernel.clone(),
            geom,
            out_shape,
        },
    ))
}

impl<T: Real> DepthwiseCtx<T> {
    pub fn backward(self, cot: &Tensor<T>) -> Result<DepthwiseGrads<T>> {
        check_cotangent("depthwise_conv2d backward", cot, &self.out_shape)?;
        let [n, c, _, _] = self.input.dims4("depthwise_conv2d")?;
        let [_, d, kh, kw] = self.kernel.dims4("depthwise_conv2d")?;
        let geom = self.geom;
        let (ilen, olen, klen) = (geom.in_len(), geom.out_len(), kh * kw);
        let cout = c * d;
        let (xd, kd, gd) = (self.input.data(), self.kernel.data(), cot.data());
        let mut gx = vec![T::zero(); n * c * ilen];
        let mut gk = vec![T::zero(); c * d * klen];
        for b in 0..n {
            for ci in 0..c {
                let xr = (b * c + ci) * ilen..(b * c + ci + 1) * ilen;
                for m in 0..d {
                    let co = ci * d + m;
                    let g = &gd[(b * cout + co) * olen..(b * cout + co + 1) * olen];
                    let kr = co * klen..(co + 1) * klen;
                    geom.kernel_grad(&mut gk[kr.clone()], g, &xd[xr.clone()]);
                    geom.input_grad(&mut gx[xr.clone()], g, &kd[kr]);
                }
            }
        }
        Ok(DepthwiseGrads {
            input: Tensor::from_vec(self.input.shape(), gx)?,
            kernel: Tensor::from_vec(self.kernel.shape(), gk)?,
        })
    }
}

#[derive(Debug)]
pub struct SeparableCtx<T: Real> {
    depth: DepthwiseCtx<T>,
    point: Conv2dCtx<T>,
}

#[derive(Debug, Clone)]
pub struct SeparableGrads<T: Real> {
    pub input: Tensor<T>,
    pub depth_kernel: Tensor<T>,
    pub point_kernel: Tensor<T>,
}

/// Separable convolution: a same-padded depthwise stage `[C,1,1,kw]`
/// followed by a pointwise `[Cout,C,1,1]` mix. Identical, bit for bit, to
/// running the two stage functions in sequence.
pub fn separable_conv2d_forward<T: Real>(
    x: &Tensor<T>,
    depth_kernel: &Tensor<T>,
    point_kernel: &Tensor<T>,
) -> Result<(Tensor<T>, SeparableCtx<T>)> {
    let [_, c, _, _] = x.dims4("separable_conv2d")?;
    let [dc, dm, _, _] = depth_kernel.dims4("separable_conv2d")?;
    let [_, pc, ph, pw] = point_kernel.dims4("separable_conv2d")?;
    if dc != c || dm != 1 {
        return Err(shape_err(
            "separable_conv2d",
            format!("depth kernel [{c},1,_,_]"),
            format!("{:?}", depth_kernel.shape()),
        ));
    }
    if pc != c || ph != 1 || pw != 1 {
        return Err(shape_err(
            "separable_conv2d",
            format!("point kernel [_,{c},1,1]"),
            format!("{:?}", point_kernel.shape()),
        ));
    }
    let (mid, depth) = depthwise_conv2d_forward_padded(x, depth_kernel, Padding::Same)?;
    let (y, point) = conv2d_forward(&mid, point_kernel, Padding::Valid)?;
    Ok((y, SeparableCtx { depth, point }))
}

impl<T: Real> SeparableCtx<T> {
    pub fn backward(self, cot: &Tensor<T>) -> Result<SeparableGrads<T>> {
        let pg = self.point.backward(cot)?;
        let mid_grad = pg.input.expect("pointwise stage keeps its input gradient");
        let dg = self.depth.backward(&mid_grad)?;
        Ok(SeparableGrads {
            input: dg.input,
            depth_kernel: dg.kernel,
            point_kernel: pg.kernel,
        })
    }
}
