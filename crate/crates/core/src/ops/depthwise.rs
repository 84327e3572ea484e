//! Depthwise-separable convolution: a per-channel spatial filter followed by
//! a 1×1 cross-channel mix.

use crate::error::{Error, Result};
use crate::ops::conv::{conv2d, conv2d_backward, ConvGeom, Padding};
use crate::tensor::{debug_check_finite, Scalar, Shape, Tensor};

fn geometry<T: Scalar>(op: &'static str, x: &Tensor<T>, dw: &Tensor<T>) -> Result<ConvGeom> {
    let (xs, ds) = (x.shape(), dw.shape());
    if ds.n != xs.c || ds.c != 1 {
        return Err(Error::shape(
            op,
            format!("depthwise weights {ds} do not match {} input channels (want Cx1xkhxkw)", xs.c),
        ));
    }
    ConvGeom::new(op, xs, ds.h, ds.w, 1, Padding::Same)
}

/// Per-channel "same" convolution, stride 1. `dw` is `C×1×kh×kw`.
pub fn depthwise_conv2d<T: Scalar>(x: &Tensor<T>, dw: &Tensor<T>) -> Result<Tensor<T>> {
    let g = geometry("depthwise_conv2d", x, dw)?;
    let xs = x.shape();
    let mut out = vec![T::zero(); xs.n * xs.c * g.oh * g.ow];
    let plane = g.h * g.w;
    for n in 0..xs.n {
        for c in 0..xs.c {
            let src = x.plane(n, c);
            let kernel = dw.plane(c, 0);
            let dst = &mut out[(n * xs.c + c) * plane..(n * xs.c + c + 1) * plane];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = kernel[ky * g.kw + kx];
                    for oy in 0..g.oh {
                        let iy = oy as isize + ky as isize - g.pad_t as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let row = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                        let drow = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = ox as isize + kx as isize - g.pad_l as isize;
                            if ix >= 0 && ix < g.w as isize {
                                *d += wv * row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    let out = Tensor::from_parts(Shape::new(xs.n, xs.c, g.oh, g.ow), out);
    debug_check_finite(&out, "depthwise_conv2d");
    Ok(out)
}

/// Returns `(d input, d depthwise weights)`.
pub fn depthwise_conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    dw: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let g = geometry("depthwise_conv2d_backward", x, dw)?;
    let xs = x.shape();
    if grad_out.shape() != xs {
        return Err(Error::shape(
            "depthwise_conv2d_backward",
            format!("output gradient {} does not match {}", grad_out.shape(), xs),
        ));
    }
    let mut dx = vec![T::zero(); xs.len()];
    let mut dk = vec![T::zero(); dw.len()];
    let plane = g.h * g.w;
    for n in 0..xs.n {
        for c in 0..xs.c {
            let src = x.plane(n, c);
            let gy = grad_out.plane(n, c);
            let kernel = dw.plane(c, 0);
            let dxp = &mut dx[(n * xs.c + c) * plane..(n * xs.c + c + 1) * plane];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = kernel[ky * g.kw + kx];
                    let mut acc = T::zero();
                    for oy in 0..g.oh {
                        let iy = oy as isize + ky as isize - g.pad_t as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        for ox in 0..g.ow {
                            let ix = ox as isize + kx as isize - g.pad_l as isize;
                            if ix < 0 || ix >= g.w as isize {
                                continue;
                            }
                            let gv = gy[oy * g.ow + ox];
                            acc += gv * src[iy * g.w + ix as usize];
                            dxp[iy * g.w + ix as usize] += gv * wv;
                        }
                    }
                    dk[c * g.kh * g.kw + ky * g.kw + kx] += acc;
                }
            }
        }
    }
    Ok((Tensor::from_parts(xs, dx), Tensor::from_parts(dw.shape(), dk)))
}

/// `pointwise(depthwise(x)) + bias`, with `dw` shaped `C×1×kh×kw` and
/// `pw` shaped `K×C×1×1`.
pub fn depthwise_separable_conv2d<T: Scalar>(
    x: &Tensor<T>,
    dw: &Tensor<T>,
    pw: &Tensor<T>,
    bias: &[T],
) -> Result<Tensor<T>> {
    check_pointwise(x.shape().c, pw)?;
    let mid = depthwise_conv2d(x, dw)?;
    conv2d(&mid, pw, bias, 1, Padding::Valid)
}

#[derive(Debug, Clone)]
pub struct SeparableGrads<T> {
    pub input: Tensor<T>,
    pub depthwise: Tensor<T>,
    pub pointwise: Tensor<T>,
    pub bias: Vec<T>,
}

pub fn depthwise_separable_conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    dw: &Tensor<T>,
    pw: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<SeparableGrads<T>> {
    check_pointwise(x.shape().c, pw)?;
    let mid = depthwise_conv2d(x, dw)?;
    let point = conv2d_backward(&mid, pw, 1, Padding::Valid, grad_out)?;
    let (input, depthwise) = depthwise_conv2d_backward(x, dw, &point.input)?;
    Ok(SeparableGrads {
        input,
        depthwise,
        pointwise: point.weights,
        bias: point.bias,
    })
}

fn check_pointwise<T: Scalar>(channels: usize, pw: &Tensor<T>) -> Result<()> {
    let ps = pw.shape();
    if ps.c != channels || ps.h != 1 || ps.w != 1 {
        return Err(Error::shape(
            "depthwise_separable_conv2d",
            format!("pointwise weights {ps} do not match {channels} channels (want Kx{channels}x1x1)"),
        ));
    }
    Ok(())
}

/// Parameter count of a separable block: `kh·kw·C + C·K + K`.
pub const fn separable_param_count(c: usize, k: usize, kh: usize, kw: usize) -> usize {
    kh * kw * c + c * k + k
}

/// Parameter count of a standard convolution: `kh·kw·C·K + K`.
pub const fn standard_param_count(c: usize, k: usize, kh: usize, kw: usize) -> usize {
    kh * kw * c * k + k
}
