//! Standard 2-D convolution (cross-correlation, no kernel flip) lowered to
//! a matrix product through `im2col`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{debug_check_finite, gemm, MatRef, Scalar, Shape, Tensor};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Zero padding of `k-1` split as `(k-1)/2` before and the rest after,
    /// so stride 1 preserves the spatial size.
    #[default]
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_t: usize,
    pub pad_l: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(
        op: &'static str,
        input: Shape,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::shape(op, "stride must be at least 1"));
        }
        let (pad_t, pad_b, pad_l, pad_r) = match padding {
            Padding::Same => ((kh - 1) / 2, kh - 1 - (kh - 1) / 2, (kw - 1) / 2, kw - 1 - (kw - 1) / 2),
            Padding::Valid => (0, 0, 0, 0),
        };
        let ph = input.h + pad_t + pad_b;
        let pw = input.w + pad_l + pad_r;
        if ph < kh || pw < kw {
            return Err(Error::shape(
                op,
                format!("{kh}x{kw} kernel does not fit padded {ph}x{pw} input"),
            ));
        }
        Ok(ConvGeom {
            c: input.c,
            h: input.h,
            w: input.w,
            kh,
            kw,
            stride,
            pad_t,
            pad_l,
            oh: (ph - kh) / stride + 1,
            ow: (pw - kw) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    /// A 1×1 stride-1 unpadded convolution reads the input as its own
    /// column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad_t == 0 && self.pad_l == 0
    }

    /// Output columns `ox` whose input column `ox*stride + k - pad` lies
    /// inside `[0, len)`.
    fn valid_range(k: usize, pad: usize, stride: usize, len: usize, out: usize) -> (usize, usize) {
        let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
        let hi = if len + pad > k {
            ((len - 1 + pad - k) / stride + 1).min(out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let p = g.out_plane();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            let (oy0, oy1) = ConvGeom::valid_range(ky, g.pad_t, g.stride, g.h, g.oh);
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut col[row * p..(row + 1) * p];
                let (ox0, ox1) = ConvGeom::valid_range(kx, g.pad_l, g.stride, g.w, g.ow);
                for oy in 0..g.oh {
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if oy < oy0 || oy >= oy1 || ox0 >= ox1 {
                        line.fill(T::zero());
                        continue;
                    }
                    let iy = oy * g.stride + ky - g.pad_t;
                    let src = &plane[iy * g.w..(iy + 1) * g.w];
                    line[..ox0].fill(T::zero());
                    line[ox1..].fill(T::zero());
                    if g.stride == 1 {
                        let ix0 = ox0 + kx - g.pad_l;
                        line[ox0..ox1].copy_from_slice(&src[ix0..ix0 + (ox1 - ox0)]);
                    } else {
                        for ox in ox0..ox1 {
                            line[ox] = src[ox * g.stride + kx - g.pad_l];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let p = g.out_plane();
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            let (oy0, oy1) = ConvGeom::valid_range(ky, g.pad_t, g.stride, g.h, g.oh);
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &col[row * p..(row + 1) * p];
                let (ox0, ox1) = ConvGeom::valid_range(kx, g.pad_l, g.stride, g.w, g.ow);
                for oy in oy0..oy1 {
                    let iy = oy * g.stride + ky - g.pad_t;
                    let line = &src[oy * g.ow..(oy + 1) * g.ow];
                    let dst = &mut plane[iy * g.w..(iy + 1) * g.w];
                    for ox in ox0..ox1 {
                        dst[ox * g.stride + kx - g.pad_l] += line[ox];
                    }
                }
            }
        }
    }
}

fn check_weights<T: Scalar>(
    op: &'static str,
    x: Shape,
    weights: &Tensor<T>,
    bias_len: Option<usize>,
) -> Result<()> {
    let ws = weights.shape();
    if ws.c != x.c {
        return Err(Error::shape(
            op,
            format!("input has {} channels but weights {} expect {}", x.c, ws, ws.c),
        ));
    }
    if let Some(len) = bias_len {
        if len != ws.n {
            return Err(Error::shape(
                op,
                format!("bias has {len} values for {} output channels", ws.n),
            ));
        }
    }
    Ok(())
}

/// Cross-correlates `x` (`N×C×H×W`) with `weights` (`K×C×kh×kw`) and adds
/// `bias` (`K`).
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let xs = x.shape();
    check_weights("conv2d", xs, weights, Some(bias.len()))?;
    let ws = weights.shape();
    let g = ConvGeom::new("conv2d", xs, ws.h, ws.w, stride, padding)?;
    let (k, plen, p) = (ws.n, g.patch_len(), g.out_plane());
    let mut out = vec![T::zero(); xs.n * k * p];
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); plen * p] };
    let wmat = MatRef::row_major(weights.data(), k, plen);
    for n in 0..xs.n {
        let xn = x.item(n);
        let cols = if g.is_pointwise() {
            xn
        } else {
            im2col(xn, &g, &mut col);
            &col
        };
        let dst = &mut out[n * k * p..(n + 1) * k * p];
        gemm(wmat, MatRef::row_major(cols, plen, p), T::zero(), dst);
        for (kk, &b) in bias.iter().enumerate() {
            dst[kk * p..(kk + 1) * p].iter_mut().for_each(|v| *v += b);
        }
    }
    let out = Tensor::from_parts(Shape::new(xs.n, k, g.oh, g.ow), out);
    debug_check_finite(&out, "conv2d");
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to its three inputs.
#[derive(Debug, Clone)]
pub struct Conv2dGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    stride: usize,
    padding: Padding,
    grad_out: &Tensor<T>,
) -> Result<Conv2dGrads<T>> {
    let (input, weights, bias) = conv2d_backward_impl(x, weights, stride, padding, grad_out, true)?;
    Ok(Conv2dGrads {
        input: input.expect("input gradient requested"),
        weights,
        bias,
    })
}

/// Backward pass; the input gradient is skipped when `want_input` is false
/// (first network layer).
pub(crate) fn conv2d_backward_impl<T: Scalar>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    stride: usize,
    padding: Padding,
    grad_out: &Tensor<T>,
    want_input: bool,
) -> Result<(Option<Tensor<T>>, Tensor<T>, Vec<T>)> {
    let xs = x.shape();
    check_weights("conv2d_backward", xs, weights, None)?;
    let ws = weights.shape();
    let g = ConvGeom::new("conv2d_backward", xs, ws.h, ws.w, stride, padding)?;
    let expected = Shape::new(xs.n, ws.n, g.oh, g.ow);
    if grad_out.shape() != expected {
        return Err(Error::shape(
            "conv2d_backward",
            format!("output gradient {} does not match {}", grad_out.shape(), expected),
        ));
    }
    let (k, plen, p) = (ws.n, g.patch_len(), g.out_plane());
    let mut dw = vec![T::zero(); k * plen];
    let mut db = vec![T::zero(); k];
    let mut dx = if want_input { vec![T::zero(); xs.len()] } else { Vec::new() };
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); plen * p] };
    let mut dcol = if want_input && !g.is_pointwise() { vec![T::zero(); plen * p] } else { Vec::new() };

    for n in 0..xs.n {
        let dy = grad_out.item(n);
        let dymat = MatRef::row_major(dy, k, p);
        let cols = if g.is_pointwise() {
            x.item(n)
        } else {
            im2col(x.item(n), &g, &mut col);
            &col
        };
        let beta = if n == 0 { T::zero() } else { T::one() };
        gemm(dymat, MatRef::transposed(cols, plen, p), beta, &mut dw);
        for (kk, acc) in db.iter_mut().enumerate() {
            *acc += dy[kk * p..(kk + 1) * p].iter().copied().sum::<T>();
        }
        if want_input {
            let wt = MatRef::transposed(weights.data(), k, plen);
            let dxn = &mut dx[n * xs.sample_len()..(n + 1) * xs.sample_len()];
            if g.is_pointwise() {
                gemm(wt, dymat, T::zero(), dxn);
            } else {
                gemm(wt, dymat, T::zero(), &mut dcol);
                col2im(&dcol, &g, dxn);
            }
        }
    }
    let dx = want_input.then(|| {
        let t = Tensor::from_parts(xs, dx);
        debug_check_finite(&t, "conv2d_backward");
        t
    });
    Ok((dx, Tensor::from_parts(ws, dw), db))
}
