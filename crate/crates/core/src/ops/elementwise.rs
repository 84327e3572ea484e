use crate::error::{Error, Result};
use crate::tensor::{debug_check_finite, Scalar, Shape, Tensor};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Gradient of [`relu`]; `x` may be either the input or the output since
/// both are positive at the same positions.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    zip_map("relu_backward", x, grad_out, |v, g| if v > T::zero() { g } else { T::zero() })
}

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let out = x.map(sigmoid_scalar);
    debug_check_finite(&out, "sigmoid");
    out
}

/// Gradient of [`sigmoid`] expressed through its output `y`.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    zip_map("sigmoid_backward", y, grad_out, |s, g| g * s * (T::one() - s))
}

/// Concatenates along channels, `a`'s channels first.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
        return Err(Error::shape(
            "concat_channels",
            format!("{sa} and {sb} disagree on batch or spatial size"),
        ));
    }
    let shape = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let mut data = Vec::with_capacity(shape.len());
    for n in 0..sa.n {
        data.extend_from_slice(a.item(n));
        data.extend_from_slice(b.item(n));
    }
    Ok(Tensor::from_parts(shape, data))
}

/// Inverse of [`concat_channels`]: the first `at` channels and the rest.
pub fn split_channels<T: Scalar>(t: &Tensor<T>, at: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = t.shape();
    if at == 0 || at >= s.c {
        return Err(Error::shape(
            "split_channels",
            format!("split point {at} must be inside 1..{}", s.c),
        ));
    }
    let plane = s.plane();
    let mut a = Vec::with_capacity(s.n * at * plane);
    let mut b = Vec::with_capacity(s.n * (s.c - at) * plane);
    for n in 0..s.n {
        let item = t.item(n);
        a.extend_from_slice(&item[..at * plane]);
        b.extend_from_slice(&item[at * plane..]);
    }
    Ok((
        Tensor::from_parts(Shape::new(s.n, at, s.h, s.w), a),
        Tensor::from_parts(Shape::new(s.n, s.c - at, s.h, s.w), b),
    ))
}

fn zip_map<T: Scalar>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{} vs {}", a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Ok(Tensor::from_parts(a.shape(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_and_sigmoid_values() {
        let x = Tensor::<f64>::from_vec(Shape::new(1, 1, 1, 3), vec![-3.0, 0.0, 3.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 3.0]);
        assert_eq!(sigmoid(&x).data()[1], 0.5);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        let lo = sigmoid_scalar(-500.0f64);
        assert!(lo > 0.0 && lo.is_finite());
        // exp(-500) = 7.124576406741286e-218 (reference value); sigmoid(-x) ≈ exp(-x) there.
        assert!((lo / 7.124_576_406_741_286e-218 - 1.0).abs() < 1e-12);
        assert_eq!(sigmoid_scalar(500.0f64), 1.0);
        // Single precision cannot represent exp(-500); the result must still be finite.
        assert!(sigmoid_scalar(-500.0f32).is_finite());
        assert!(sigmoid_scalar(500.0f32).is_finite());
    }

    #[test]
    fn concat_then_split_round_trips() {
        let a = Tensor::<f64>::from_fn(Shape::new(1, 2, 4, 4), |_, c, y, x| (c * 16 + y * 4 + x) as f64).unwrap();
        let b = Tensor::<f64>::from_fn(Shape::new(1, 3, 4, 4), |_, c, y, x| -((c * 16 + y * 4 + x) as f64)).unwrap();
        let ab = concat_channels(&a, &b).unwrap();
        assert_eq!(ab.shape(), Shape::new(1, 5, 4, 4));
        let (a2, b2) = split_channels(&ab, 2).unwrap();
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::<f64>::zeros(Shape::new(1, 2, 4, 4)).unwrap();
        let b = Tensor::<f64>::zeros(Shape::new(1, 2, 4, 2)).unwrap();
        assert!(concat_channels(&a, &b).is_err());
        // A zero-channel operand cannot even be constructed.
        assert!(Tensor::<f64>::zeros(Shape::new(1, 0, 4, 4)).is_err());
    }
}
