//! Forward and backward kernels. The autodiff graph dispatches into these.

use crate::error::{shape_err, Result};
use crate::scalar::Real;

use super::Tensor;

/// Geometry of a valid-padding 2-d convolution over a batch.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub in_ch: usize,
    pub h: usize,
    pub w: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvDims {
    pub fn new(input: &[usize], kernels: &[usize], stride: usize) -> Result<Self> {
        if input.len() != 4 || kernels.len() != 4 || input[1] != kernels[1] || stride == 0 {
            return shape_err("conv2d", input, kernels);
        }
        let (h, w, kh, kw) = (input[2], input[3], kernels[2], kernels[3]);
        if kh > h || kw > w || (h - kh) % stride != 0 || (w - kw) % stride != 0 {
            return shape_err("conv2d", input, kernels);
        }
        Ok(Self {
            batch: input[0],
            in_ch: input[1],
            h,
            w,
            out_ch: kernels[0],
            kh,
            kw,
            stride,
            oh: (h - kh) / stride + 1,
            ow: (w - kw) / stride + 1,
        })
    }

    /// Covering ranges for every input row and column.
    fn cover_tables(&self) -> (Vec<std::ops::Range<usize>>, Vec<std::ops::Range<usize>>) {
        let ys = (0..self.h)
            .map(|p| Self::covering(p, self.kh, self.stride, self.oh))
            .collect();
        let xs = (0..self.w)
            .map(|p| Self::covering(p, self.kw, self.stride, self.ow))
            .collect();
        (ys, xs)
    }

    /// Output positions along one axis whose window covers input coordinate `p`.
    fn covering(p: usize, k: usize, s: usize, out: usize) -> std::ops::Range<usize> {
        let lo = if p + 1 >= k { (p + 1 - k).div_ceil(s) } else { 0 };
        let hi = (p / s + 1).min(out);
        lo..hi.max(lo)
    }
}

/// `[K, C, kh, kw]` -> `[C, kh, kw, K]` so the output-channel loop is contiguous.
fn kernels_channel_last<T: Real>(k: &[T], d: &ConvDims) -> Vec<T> {
    let inner = d.in_ch * d.kh * d.kw;
    let mut out = vec![T::zero(); k.len()];
    for o in 0..d.out_ch {
        for q in 0..inner {
            out[q * d.out_ch + o] = k[o * inner + q];
        }
    }
    out
}

/// Batched convolution, input `[B, C, H, W]`, kernels `[K, C, kh, kw]`, output `[B, K, H', W']`.
///
/// Scatters each non-zero input element into the windows covering it, so sparse
/// mask planes cost proportionally to their occupancy.
pub(crate) fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>> {
    let d = ConvDims::new(input.shape(), kernels.shape(), stride)?;
    if let Some(b) = bias {
        if b.shape() != [d.out_ch] {
            return shape_err("conv2d bias", b.shape(), &[d.out_ch]);
        }
    }
    let kt = kernels_channel_last(kernels.data(), &d);
    let x = input.data();
    let ko = d.out_ch;
    let (ycov, xcov) = d.cover_tables();
    let mut acc = vec![T::zero(); d.batch * d.oh * d.ow * ko];
    for b in 0..d.batch {
        let acc_b = &mut acc[b * d.oh * d.ow * ko..(b + 1) * d.oh * d.ow * ko];
        for c in 0..d.in_ch {
            let plane = &x[(b * d.in_ch + c) * d.h * d.w..(b * d.in_ch + c + 1) * d.h * d.w];
            for (iy, oys) in ycov.iter().enumerate() {
                if oys.is_empty() {
                    continue;
                }
                for (ix, oxs) in xcov.iter().enumerate() {
                    let v = plane[iy * d.w + ix];
                    if v == T::zero() {
                        continue;
                    }
                    for oy in oys.clone() {
                        let i = iy - oy * d.stride;
                        for ox in oxs.clone() {
                            let j = ix - ox * d.stride;
                            let kr = &kt[((c * d.kh + i) * d.kw + j) * ko..][..ko];
                            let or = &mut acc_b[(oy * d.ow + ox) * ko..][..ko];
                            axpy(or, v, kr);
                        }
                    }
                }
            }
        }
    }
    let mut out = vec![T::zero(); acc.len()];
    let plane = d.oh * d.ow;
    for b in 0..d.batch {
        for p in 0..plane {
            for o in 0..ko {
                let bv = bias.map_or(T::zero(), |t| t.data()[o]);
                out[(b * ko + o) * plane + p] = acc[(b * plane + p) * ko + o] + bv;
            }
        }
    }
    Tensor::new(&[d.batch, ko, d.oh, d.ow], out)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

pub(crate) fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    stride: usize,
    grad_out: &Tensor<T>,
    want_input: bool,
) -> Result<ConvGrads<T>> {
    let d = ConvDims::new(input.shape(), kernels.shape(), stride)?;
    let ko = d.out_ch;
    let plane = d.oh * d.ow;
    if grad_out.shape() != [d.batch, ko, d.oh, d.ow] {
        return shape_err("conv2d backward", grad_out.shape(), &[d.batch, ko, d.oh, d.ow]);
    }
    let g = grad_out.data();
    let mut gt = vec![T::zero(); g.len()];
    let mut gbias = vec![T::zero(); ko];
    for b in 0..d.batch {
        for o in 0..ko {
            for p in 0..plane {
                let v = g[(b * ko + o) * plane + p];
                gt[(b * plane + p) * ko + o] = v;
                gbias[o] += v;
            }
        }
    }
    let kt = kernels_channel_last(kernels.data(), &d);
    let x = input.data();
    let mut gkt = vec![T::zero(); kt.len()];
    let mut gin = want_input.then(|| vec![T::zero(); x.len()]);
    let (ycov, xcov) = d.cover_tables();
    for b in 0..d.batch {
        let gt_b = &gt[b * plane * ko..(b + 1) * plane * ko];
        for c in 0..d.in_ch {
            let base = (b * d.in_ch + c) * d.h * d.w;
            for (iy, oys) in ycov.iter().enumerate() {
                if oys.is_empty() {
                    continue;
                }
                for (ix, oxs) in xcov.iter().enumerate() {
                    let v = x[base + iy * d.w + ix];
                    if v == T::zero() && gin.is_none() {
                        continue;
                    }
                    let mut gi = T::zero();
                    for oy in oys.clone() {
                        let i = iy - oy * d.stride;
                        for ox in oxs.clone() {
                            let j = ix - ox * d.stride;
                            let koff = ((c * d.kh + i) * d.kw + j) * ko;
                            let gr = &gt_b[(oy * d.ow + ox) * ko..][..ko];
                            if v != T::zero() {
                                axpy(&mut gkt[koff..koff + ko], v, gr);
                            }
                            if gin.is_some() {
                                gi += dot(&kt[koff..koff + ko], gr);
                            }
                        }
                    }
                    if let Some(gin) = gin.as_mut() {
                        gin[base + iy * d.w + ix] = gi;
                    }
                }
            }
        }
    }
    let inner = d.in_ch * d.kh * d.kw;
    let mut gk = vec![T::zero(); gkt.len()];
    for o in 0..ko {
        for q in 0..inner {
            gk[o * inner + q] = gkt[q * ko + o];
        }
    }
    Ok(ConvGrads {
        input: match gin {
            Some(v) => Some(Tensor::new(input.shape(), v)?),
            None => None,
        },
        kernels: Tensor::new(kernels.shape(), gk)?,
        bias: Tensor::new(&[ko], gbias)?,
    })
}

/// `out += a * x`.
#[inline]
pub(crate) fn axpy<T: Real>(out: &mut [T], a: T, x: &[T]) {
    let x = &x[..out.len()];
    for i in 0..out.len() {
        out[i] += a * x[i];
    }
}

/// `out += a * x * y` elementwise.
#[inline]
pub(crate) fn axpy_scaled<T: Real>(out: &mut [T], a: T, x: &[T], y: &[T]) {
    let (x, y) = (&x[..out.len()], &y[..out.len()]);
    for i in 0..out.len() {
        out[i] += a * x[i] * y[i];
    }
}

/// Dot product with a fixed eight-lane accumulation order.
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    let mut s = ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]));
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y[b, m] = sum_n w[m, n] x[b, n] + bias[m]`.
pub(crate) fn linear_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || bias.shape() != [ws[0]] {
        return shape_err("linear", xs, ws);
    }
    let (batch, n, m) = (xs[0], xs[1], ws[0]);
    let mut out = Vec::with_capacity(batch * m);
    for b in 0..batch {
        let xr = &x.data()[b * n..(b + 1) * n];
        for o in 0..m {
            out.push(dot(&w.data()[o * n..(o + 1) * n], xr) + bias.data()[o]);
        }
    }
    Tensor::new(&[batch, m], out)
}

pub(crate) struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub(crate) fn linear_backward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, grad_out: &Tensor<T>) -> Result<LinearGrads<T>> {
    let (batch, n, m) = (x.shape()[0], x.shape()[1], w.shape()[0]);
    if grad_out.shape() != [batch, m] {
        return shape_err("linear backward", grad_out.shape(), &[batch, m]);
    }
    let mut gx = vec![T::zero(); batch * n];
    let mut gw = vec![T::zero(); m * n];
    let mut gb = vec![T::zero(); m];
    for b in 0..batch {
        let xr = &x.data()[b * n..(b + 1) * n];
        for o in 0..m {
            let g = grad_out.data()[b * m + o];
            if g == T::zero() {
                continue;
            }
            gb[o] += g;
            let wr = &w.data()[o * n..(o + 1) * n];
            axpy(&mut gx[b * n..(b + 1) * n], g, wr);
            axpy(&mut gw[o * n..(o + 1) * n], g, xr);
        }
    }
    Ok(LinearGrads {
        input: Tensor::new(x.shape(), gx)?,
        weight: Tensor::new(w.shape(), gw)?,
        bias: Tensor::new(&[m], gb)?,
    })
}

/// Log-softmax over the last axis.
pub(crate) fn log_softmax_last<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let k = *x.shape().last().expect("non-empty shape");
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = mx + row.iter().map(|&v| (v - mx).exp()).sum::<T>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

/// Dueling aggregation: value `[B, Z]`, advantages `[B, A*Z]` -> `[B, A, Z]`.
pub(crate) fn dueling_forward<T: Real>(value: &Tensor<T>, adv: &Tensor<T>, actions: usize) -> Result<Tensor<T>> {
    let (vs, as_) = (value.shape(), adv.shape());
    if vs.len() != 2 || as_.len() != 2 || as_[0] != vs[0] || as_[1] != actions * vs[1] {
        return shape_err("dueling", vs, as_);
    }
    let (batch, z) = (vs[0], vs[1]);
    let (v, a) = (value.data(), adv.data());
    let inv = T::one() / T::of(actions as f64);
    let mut out = vec![T::zero(); batch * actions * z];
    for b in 0..batch {
        for i in 0..z {
            let mean = (0..actions).map(|k| a[(b * actions + k) * z + i]).sum::<T>() * inv;
            for k in 0..actions {
                out[(b * actions + k) * z + i] = v[b * z + i] + a[(b * actions + k) * z + i] - mean;
            }
        }
    }
    Tensor::new(&[batch, actions, z], out)
}
