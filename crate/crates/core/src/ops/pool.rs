use crate::error::{Error, Result};
use crate::tensor::{debug_check_finite, Scalar, Shape, Tensor};

/// 2×2 max pooling with stride 2.
///
/// Returns the pooled tensor and, for each output element, the flat index of
/// the input element that won. Ties go to the first element of the window in
/// row-major order.
pub fn maxpool2d<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let s = x.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::shape(
            "maxpool2d",
            format!("spatial dims must be even, got {}x{}", s.h, s.w),
        ));
    }
    let (oh, ow) = (s.h / 2, s.w / 2);
    let out_shape = Shape::new(s.n, s.c, oh, ow);
    let mut out = Vec::with_capacity(out_shape.len());
    let mut argmax = Vec::with_capacity(out_shape.len());
    let data = x.data();
    for plane in 0..s.n * s.c {
        let base = plane * s.h * s.w;
        for oy in 0..oh {
            for ox in 0..ow {
                let first = base + 2 * oy * s.w + 2 * ox;
                let mut best = first;
                for idx in [first + 1, first + s.w, first + s.w + 1] {
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::from_parts(out_shape, out), argmax))
}

/// Routes each output gradient to the input position recorded in `argmax`.
pub fn maxpool2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    argmax: &[usize],
    input_shape: Shape,
) -> Result<Tensor<T>> {
    let gs = grad_out.shape();
    let expected = Shape::new(input_shape.n, input_shape.c, input_shape.h / 2, input_shape.w / 2);
    if gs != expected || argmax.len() != gs.len() {
        return Err(Error::shape(
            "maxpool2d_backward",
            format!("gradient {gs} does not match pooled shape {expected}"),
        ));
    }
    let mut dx = vec![T::zero(); input_shape.len()];
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        dx[idx] += g;
    }
    Ok(Tensor::from_parts(input_shape, dx))
}

/// Nearest-neighbour 2× upsampling by pixel replication.
pub fn upsample_nearest2x<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let (oh, ow) = (s.h * 2, s.w * 2);
    let mut out = vec![T::zero(); s.n * s.c * oh * ow];
    for plane in 0..s.n * s.c {
        let src = &x.data()[plane * s.h * s.w..(plane + 1) * s.h * s.w];
        let dst = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
        for y in 0..s.h {
            let (top, bottom) = dst[2 * y * ow..(2 * y + 2) * ow].split_at_mut(ow);
            for (x, &v) in src[y * s.w..(y + 1) * s.w].iter().enumerate() {
                top[2 * x] = v;
                top[2 * x + 1] = v;
            }
            bottom.copy_from_slice(top);
        }
    }
    let out = Tensor::from_parts(Shape::new(s.n, s.c, oh, ow), out);
    debug_check_finite(&out, "upsample_nearest2x");
    out
}

/// Sums each 2×2 block of the upsampled gradient.
pub fn upsample_nearest2x_backward<T: Scalar>(grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let s = grad_out.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::shape(
            "upsample_nearest2x_backward",
            format!("gradient spatial dims must be even, got {}x{}", s.h, s.w),
        ));
    }
    let (h, w) = (s.h / 2, s.w / 2);
    let mut dx = vec![T::zero(); s.n * s.c * h * w];
    for plane in 0..s.n * s.c {
        let src = grad_out.plane(plane / s.c, plane % s.c);
        for y in 0..h {
            for x in 0..w {
                let i = 2 * y * s.w + 2 * x;
                dx[plane * h * w + y * w + x] = src[i] + src[i + 1] + src[i + s.w] + src[i + s.w + 1];
            }
        }
    }
    Ok(Tensor::from_parts(Shape::new(s.n, s.c, h, w), dx))
}
