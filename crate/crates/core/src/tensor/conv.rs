//! Direct-loop 2D convolution (no FFT path; spectral filtering is a
//! semantically separate module).

use super::{Graph, TensorId};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy)]
struct ConvDims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

/// Output rows/cols for which the kernel tap (i or j) lands inside the input.
#[inline]
fn tap_bounds(tap: usize, pad: usize, stride: usize, in_dim: usize, out_dim: usize) -> (usize, usize) {
    // in_coord = out_coord*stride + tap - pad must lie in [0, in_dim)
    let lo = if tap >= pad {
        0
    } else {
        (pad - tap).div_ceil(stride)
    };
    let hi_in = in_dim + pad;
    let hi = if hi_in > tap {
        ((hi_in - tap - 1) / stride + 1).min(out_dim)
    } else {
        0
    };
    (lo.min(hi), hi)
}

fn forward<T: Real>(x: &[T], w: &[T], b: &[T], d: ConvDims) -> Vec<T> {
    let mut out = vec![T::zero(); d.n * d.k * d.oh * d.ow];
    for n in 0..d.n {
        for k in 0..d.k {
            let oplane = &mut out[(n * d.k + k) * d.oh * d.ow..(n * d.k + k + 1) * d.oh * d.ow];
            for v in oplane.iter_mut() {
                *v = b[k];
            }
            for c in 0..d.c {
                let iplane = &x[(n * d.c + c) * d.h * d.w..(n * d.c + c + 1) * d.h * d.w];
                for i in 0..d.kh {
                    let (oh_lo, oh_hi) = tap_bounds(i, d.pad, d.stride, d.h, d.oh);
                    for j in 0..d.kw {
                        let wv = w[((k * d.c + c) * d.kh + i) * d.kw + j];
                        let (ow_lo, ow_hi) = tap_bounds(j, d.pad, d.stride, d.w, d.ow);
                        for oh in oh_lo..oh_hi {
                            let ih = oh * d.stride + i - d.pad;
                            let irow = &iplane[ih * d.w..(ih + 1) * d.w];
                            let orow = &mut oplane[oh * d.ow..(oh + 1) * d.ow];
                            if d.stride == 1 {
                                let base = j.wrapping_sub(d.pad);
                                for ow in ow_lo..ow_hi {
                                    orow[ow] += wv * irow[ow.wrapping_add(base)];
                                }
                            } else {
                                for ow in ow_lo..ow_hi {
                                    orow[ow] += wv * irow[ow * d.stride + j - d.pad];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn backward<T: Real>(x: &[T], w: &[T], g: &[T], d: ConvDims) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut gx = vec![T::zero(); d.n * d.c * d.h * d.w];
    let mut gw = vec![T::zero(); d.k * d.c * d.kh * d.kw];
    let mut gb = vec![T::zero(); d.k];
    for n in 0..d.n {
        for k in 0..d.k {
            let gplane = &g[(n * d.k + k) * d.oh * d.ow..(n * d.k + k + 1) * d.oh * d.ow];
            let mut acc = T::zero();
            for v in gplane {
                acc += *v;
            }
            gb[k] += acc;
            for c in 0..d.c {
                let iplane = &x[(n * d.c + c) * d.h * d.w..(n * d.c + c + 1) * d.h * d.w];
                let gxplane_base = (n * d.c + c) * d.h * d.w;
                for i in 0..d.kh {
                    let (oh_lo, oh_hi) = tap_bounds(i, d.pad, d.stride, d.h, d.oh);
                    for j in 0..d.kw {
                        let widx = ((k * d.c + c) * d.kh + i) * d.kw + j;
                        let wv = w[widx];
                        let (ow_lo, ow_hi) = tap_bounds(j, d.pad, d.stride, d.w, d.ow);
                        let mut wacc = T::zero();
                        for oh in oh_lo..oh_hi {
                            let ih = oh * d.stride + i - d.pad;
                            let grow = &gplane[oh * d.ow..(oh + 1) * d.ow];
                            let irow = &iplane[ih * d.w..(ih + 1) * d.w];
                            let gxrow = &mut gx[gxplane_base + ih * d.w..gxplane_base + (ih + 1) * d.w];
                            for ow in ow_lo..ow_hi {
                                let iw = ow * d.stride + j - d.pad;
                                let gv = grow[ow];
                                wacc += gv * irow[iw];
                                gxrow[iw] += wv * gv;
                            }
                        }
                        gw[widx] += wacc;
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

impl<T: Real> Graph<T> {
    /// 2D convolution of `[N,C,H,W]` with `[K,C,kh,kw]` weights and `[K]`
    /// bias. Differentiable w.r.t. input, weight, and bias.
    pub fn conv2d(
        &mut self,
        input: TensorId,
        weight: TensorId,
        bias: TensorId,
        stride: usize,
        padding: usize,
    ) -> Result<TensorId> {
        let sx = self.shape(input).to_vec();
        let sw = self.shape(weight).to_vec();
        let sb = self.shape(bias).to_vec();
        if sx.len() != 4 || sw.len() != 4 || sb.len() != 1 {
            return Err(Error::Dimension(format!(
                "conv2d: input {sx:?}, weight {sw:?}, bias {sb:?}"
            )));
        }
        if sx[1] != sw[1] {
            return Err(Error::Dimension(format!(
                "conv2d: input channels {} != weight channels {}",
                sx[1], sw[1]
            )));
        }
        if sb[0] != sw[0] {
            return Err(Error::Dimension(format!(
                "conv2d: bias length {} != output channels {}",
                sb[0], sw[0]
            )));
        }
        if stride < 1 {
            return Err(Error::Parameter("conv2d: stride must be >= 1".into()));
        }
        let (h, w) = (sx[2], sx[3]);
        let (kh, kw) = (sw[2], sw[3]);
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(Error::Dimension(format!(
                "conv2d: kernel {kh}x{kw} exceeds padded input {}x{}",
                h + 2 * padding,
                w + 2 * padding
            )));
        }
        let d = ConvDims {
            n: sx[0],
            c: sx[1],
            h,
            w,
            k: sw[0],
            kh,
            kw,
            oh: (h + 2 * padding - kh) / stride + 1,
            ow: (w + 2 * padding - kw) / stride + 1,
            stride,
            pad: padding,
        };
        let xv = self.value_arc(input);
        let wv = self.value_arc(weight);
        let out = forward(&xv, &wv, self.value(bias), d);
        Ok(self.push_op(
            vec![d.n, d.k, d.oh, d.ow],
            out,
            vec![input, weight, bias],
            Box::new(move |g| {
                let (gx, gw, gb) = backward(&xv, &wv, g, d);
                vec![gx, gw, gb]
            }),
        ))
    }
}

/// Six-nested-loop reference convolution, used only by tests as an
/// independent oracle for the optimized loops above.
pub fn conv2d_reference<T: Real>(
    x: &[T],
    x_shape: &[usize],
    w: &[T],
    w_shape: &[usize],
    b: &[T],
    stride: usize,
    pad: usize,
) -> (Vec<T>, Vec<usize>) {
    let (n, c, h, wd) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (k, kh, kw) = (w_shape[0], w_shape[2], w_shape[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![T::zero(); n * k * oh * ow];
    for ni in 0..n {
        for ki in 0..k {
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut acc = b[ki];
                    for ci in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let ih = oi * stride + i;
                                let iw = oj * stride + j;
                                if ih < pad || iw < pad {
                                    continue;
                                }
                                let (ih, iw) = (ih - pad, iw - pad);
                                if ih >= h || iw >= wd {
                                    continue;
                                }
                                acc += w[((ki * c + ci) * kh + i) * kw + j]
                                    * x[((ni * c + ci) * h + ih) * wd + iw];
                            }
                        }
                    }
                    out[((ni * k + ki) * oh + oi) * ow + oj] = acc;
                }
            }
        }
    }
    (out, vec![n, k, oh, ow])
}
