//! Evaluation metrics: per-instance IoU and its batch-, class- and
//! instance-averaged aggregates, the exact distance transform, and the
//! border-error distribution.

mod edt;
mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use edt::{edt, squared_edt};
pub use report::{EvalReport, Histogram};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// `|pred ∧ gt| / |pred ∨ gt|`; 1 when both are empty.
pub fn instance_iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    if !pred.same_dims(gt) {
        return Err(Error::shape(
            "instance_iou",
            format!("{}x{} vs {}x{}", pred.width(), pred.height(), gt.width(), gt.height()),
        ));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.bits().iter().zip(gt.bits()) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Evaluation outcome of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub instance_id: usize,
    pub class_id: u32,
    pub iou: f64,
    /// Border error samples in pixels; empty for degenerate instances.
    pub border_distances: Vec<f64>,
}

/// Mean of per-batch mean IoUs; every batch weighs the same regardless of
/// its size.
pub fn aggregate_aiou(batch_ious: &[f64]) -> Result<f64> {
    mean(batch_ious).ok_or(Error::Empty("aIoU needs at least one batch"))
}

/// Class-balanced IoU.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassIou {
    pub miou: f64,
    pub per_class: BTreeMap<u32, f64>,
}

/// Mean over classes of the mean IoU within each class.
pub fn aggregate_miou(records: &[EvalRecord]) -> Result<ClassIou> {
    if records.is_empty() {
        return Err(Error::Empty("mIoU needs at least one record"));
    }
    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = sums.entry(r.class_id).or_default();
        e.0 += r.iou;
        e.1 += 1;
    }
    let per_class: BTreeMap<u32, f64> = sums.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect();
    let means: Vec<f64> = per_class.values().copied().collect();
    Ok(ClassIou {
        miou: mean(&means).expect("non-empty"),
        per_class,
    })
}

/// Flat mean over instances.
pub fn aggregate_iiou(records: &[EvalRecord]) -> Result<f64> {
    let ious: Vec<f64> = records.iter().map(|r| r.iou).collect();
    mean(&ious).ok_or(Error::Empty("iIoU needs at least one record"))
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Foreground pixels with at least one background 4-neighbour; pixels
/// outside the image count as background.
pub fn boundary(mask: &BinaryMask) -> BinaryMask {
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        let (x, y) = (x as isize, y as isize);
        [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .any(|&(dx, dy)| !mask.get_or_false(x + dx, y + dy))
    })
}

/// Distance from every boundary pixel of `pred` (row-major order) to the
/// nearest boundary pixel of `gt`.
pub fn border_error(pred: &BinaryMask, gt: &BinaryMask) -> Result<Vec<f64>> {
    if !pred.same_dims(gt) {
        return Err(Error::shape("border_error", "mask dimensions differ"));
    }
    if pred.is_empty() {
        return Err(Error::EmptyMask("border error of an empty prediction"));
    }
    if gt.is_empty() {
        return Err(Error::EmptyMask("border error against an empty ground truth"));
    }
    let dist = edt(&boundary(gt))?;
    let w = pred.width();
    Ok(boundary(pred).pixels().map(|(x, y)| dist[y * w + x]).collect())
}
