//! Training objectives on predicted probabilities `y` and binary labels `y′`.
//!
//! Set operations on probabilities use the product relaxation
//! `|y ∩ y′| = Σ y·y′` and `|y ∪ y′| = Σ (y + y′ − y·y′)`, which reduce to
//! exact pixel counts when `y` is binary.
//!
//! The average-distance loss divides the soft symmetric difference by
//! `√A_g`, where `A_g` is the ground-truth mask area in pixels: `√A_g`
//! stands in for the boundary length, so the quotient approximates the mean
//! boundary displacement in pixels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Smoothing constant of the soft IoU loss.
pub const SOFT_IOU_EPS: f64 = 1e-6;
/// Probabilities are clamped to `[BCE_CLAMP, 1 − BCE_CLAMP]` inside BCE.
pub const BCE_CLAMP: f64 = 1e-7;
/// Default weight of the IoU term in [`bce_iou_loss`].
pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Soft areas of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftOverlap {
    pub intersection: f64,
    pub union: f64,
    pub gt_area: f64,
}

impl SoftOverlap {
    /// Boundary-length proxy `√A_g`.
    pub fn boundary_length(&self) -> f64 {
        self.gt_area.sqrt()
    }
}

fn check<T: Scalar>(op: &'static str, y: &Tensor<T>, y_true: &Tensor<T>) -> Result<()> {
    if y.shape() != y_true.shape() {
        return Err(Error::shape(op, format!("{} vs {}", y.shape(), y_true.shape())));
    }
    Ok(())
}

fn overlap_of<T: Scalar>(y: &[T], t: &[T]) -> SoftOverlap {
    let (mut i, mut u, mut g) = (0.0, 0.0, 0.0);
    for (&p, &q) in y.iter().zip(t) {
        let (p, q) = (p.to_f64_lossy(), q.to_f64_lossy());
        i += p * q;
        u += p + q - p * q;
        g += q;
    }
    SoftOverlap {
        intersection: i,
        union: u,
        gt_area: g,
    }
}

/// Soft intersection, union and ground-truth area over the whole tensor.
pub fn soft_overlap<T: Scalar>(y: &Tensor<T>, y_true: &Tensor<T>) -> Result<SoftOverlap> {
    check("soft_overlap", y, y_true)?;
    Ok(overlap_of(y.data(), y_true.data()))
}

/// `(A_u − A_i) / √A_g`.
pub fn avg_distance_loss<T: Scalar>(y: &Tensor<T>, y_true: &Tensor<T>) -> Result<f64> {
    check("avg_distance_loss", y, y_true)?;
    Ok(item(LossKind::AvgDistance, DEFAULT_LAMBDA, y.data(), y_true.data(), false)?.0)
}

/// `1 − (A_i + ε)/(A_u + ε)`.
pub fn soft_iou_loss<T: Scalar>(y: &Tensor<T>, y_true: &Tensor<T>) -> Result<f64> {
    check("soft_iou_loss", y, y_true)?;
    Ok(item(LossKind::SoftIou, DEFAULT_LAMBDA, y.data(), y_true.data(), false)?.0)
}

/// `λ · soft IoU + (1 − λ) · mean per-pixel binary cross-entropy`.
pub fn bce_iou_loss<T: Scalar>(y: &Tensor<T>, y_true: &Tensor<T>, lambda: f64) -> Result<f64> {
    check("bce_iou_loss", y, y_true)?;
    Ok(item(LossKind::BceIou, lambda, y.data(), y_true.data(), false)?.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    AvgDistance,
    SoftIou,
    BceIou,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::AvgDistance => "avg_distance",
            LossKind::SoftIou => "soft_iou",
            LossKind::BceIou => "bce_iou",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "avg_distance" => Ok(LossKind::AvgDistance),
            "soft_iou" => Ok(LossKind::SoftIou),
            "bce_iou" => Ok(LossKind::BceIou),
            other => Err(format!("unknown loss {other:?} (expected avg_distance, soft_iou or bce_iou)")),
        }
    }
}

/// A loss choice plus its weighting, applied per batch item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loss {
    pub kind: LossKind,
    /// IoU weight for [`LossKind::BceIou`]; ignored otherwise.
    pub lambda: f64,
}

impl Default for Loss {
    fn default() -> Self {
        Loss::new(LossKind::AvgDistance)
    }
}

impl Loss {
    pub fn new(kind: LossKind) -> Self {
        Loss {
            kind,
            lambda: DEFAULT_LAMBDA,
        }
    }

    /// Mean loss over the batch and its gradient with respect to `y`.
    pub fn batch_value_and_grad<T: Scalar>(&self, y: &Tensor<T>, y_true: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
        check("loss", y, y_true)?;
        let n = y.shape().n;
        let scale = 1.0 / n as f64;
        let mut total = 0.0;
        let mut grad = Vec::with_capacity(y.len());
        for i in 0..n {
            let (v, g) = item(self.kind, self.lambda, y.item(i), y_true.item(i), true)?;
            total += v;
            grad.extend(g.into_iter().map(|d| T::from_f64_lossy(d * scale)));
        }
        Ok((total * scale, Tensor::from_parts(y.shape(), grad)))
    }

    /// Mean loss over the batch.
    pub fn batch_value<T: Scalar>(&self, y: &Tensor<T>, y_true: &Tensor<T>) -> Result<f64> {
        check("loss", y, y_true)?;
        let n = y.shape().n;
        let mut total = 0.0;
        for i in 0..n {
            total += item(self.kind, self.lambda, y.item(i), y_true.item(i), false)?.0;
        }
        Ok(total / n as f64)
    }
}

/// Loss of one instance and, when requested, `∂loss/∂y` in `f64`.
fn item<T: Scalar>(kind: LossKind, lambda: f64, y: &[T], t: &[T], want_grad: bool) -> Result<(f64, Vec<f64>)> {
    let ov = overlap_of(y, t);
    let mut grad = if want_grad { vec![0.0; y.len()] } else { Vec::new() };
    let value = match kind {
        LossKind::AvgDistance => {
            if ov.gt_area <= 0.0 {
                return Err(Error::EmptyGroundTruth);
            }
            let l = ov.boundary_length();
            // ∂(A_u − A_i)/∂y = (1 − y′) − y′.
            for (g, &q) in grad.iter_mut().zip(t) {
                *g = (1.0 - 2.0 * q.to_f64_lossy()) / l;
            }
            (ov.union - ov.intersection) / l
        }
        LossKind::SoftIou => {
            add_soft_iou_grad(&ov, t, 1.0, &mut grad);
            soft_iou_value(&ov)
        }
        LossKind::BceIou => {
            add_soft_iou_grad(&ov, t, lambda, &mut grad);
            let bce = bce(y, t, 1.0 - lambda, &mut grad);
            lambda * soft_iou_value(&ov) + (1.0 - lambda) * bce
        }
    };
    Ok((value, grad))
}

fn soft_iou_value(ov: &SoftOverlap) -> f64 {
    1.0 - (ov.intersection + SOFT_IOU_EPS) / (ov.union + SOFT_IOU_EPS)
}

fn add_soft_iou_grad<T: Scalar>(ov: &SoftOverlap, t: &[T], weight: f64, grad: &mut [f64]) {
    let (i, u) = (ov.intersection + SOFT_IOU_EPS, ov.union + SOFT_IOU_EPS);
    let denom = u * u;
    for (g, &q) in grad.iter_mut().zip(t) {
        let q = q.to_f64_lossy();
        *g -= weight * (q * u - i * (1.0 - q)) / denom;
    }
}

/// Mean BCE; accumulates `weight · ∂BCE/∂y` into `grad` when non-empty.
fn bce<T: Scalar>(y: &[T], t: &[T], weight: f64, grad: &mut [f64]) -> f64 {
    let n = y.len() as f64;
    let mut total = 0.0;
    for (k, (&p, &q)) in y.iter().zip(t).enumerate() {
        let raw = p.to_f64_lossy();
        let q = q.to_f64_lossy();
        let p = raw.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        total -= q * p.ln() + (1.0 - q) * (1.0 - p).ln();
        if !grad.is_empty() && raw > BCE_CLAMP && raw < 1.0 - BCE_CLAMP {
            grad[k] += weight * (-q / p + (1.0 - q) / (1.0 - p)) / n;
        }
    }
    total / n
}
