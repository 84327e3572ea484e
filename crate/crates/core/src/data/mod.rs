//! Dataset index, instance crops, extreme points and augmentation.

mod augment;
mod crop;
mod dataset;
mod image;
pub mod synthetic;

pub use augment::{augment, flip, rotate, sample_rng, AugmentConfig};
pub use crop::{
    crop_mask, crop_rgb, extract_instance, extreme_points, render_disks, render_ep_channel, CropBox, CropConfig, ExtremePoints,
    InstanceSample, Point,
};
pub use dataset::{
    default_classes, load_dataset, write_dataset, Dataset, DatasetIndex, SampleEntry, Scene, Split, INDEX_FILE,
};
pub use image::{load_mask, save_mask, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Stacks samples into an `n×(3|4)×S×S` input (R, G, B, then the
/// extreme-point channel when `with_ep`) and an `n×1×S×S` target.
pub fn make_batch(samples: &[&InstanceSample], with_ep: bool) -> Result<(Tensor, Tensor)> {
    let first = samples.first().ok_or(Error::Empty("batch needs at least one sample"))?;
    let s = first.size();
    let c = if with_ep { 4 } else { 3 };
    let plane = s * s;
    let mut input = Vec::with_capacity(samples.len() * c * plane);
    let mut target = Vec::with_capacity(samples.len() * plane);
    for (i, sample) in samples.iter().enumerate() {
        if sample.size() != s || sample.rgb.shape() != Shape::new(1, 3, s, s) {
            return Err(Error::shape(
                "make_batch",
                format!("sample {i} has size {} but the batch uses {s}", sample.size()),
            ));
        }
        input.extend_from_slice(sample.rgb.data());
        if with_ep {
            input.extend_from_slice(sample.ep_channel.data());
        }
        target.extend(sample.gt_mask.bits().iter().map(|&b| if b { 1f32 } else { 0.0 }));
    }
    let n = samples.len();
    Ok((
        Tensor::from_parts(Shape::new(n, c, s, s), input),
        Tensor::from_parts(Shape::new(n, 1, s, s), target),
    ))
}
