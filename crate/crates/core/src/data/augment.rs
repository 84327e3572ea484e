use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::crop::InstanceSample;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub max_rotation_deg: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip_prob: 0.5,
            max_rotation_deg: 10.0,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        AugmentConfig {
            flip_prob: 0.0,
            max_rotation_deg: 0.0,
        }
    }

    pub fn is_disabled(&self) -> bool {
        self.flip_prob <= 0.0 && self.max_rotation_deg == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::InvalidConfig(format!("flip_prob must be in [0, 1], got {}", self.flip_prob)));
        }
        if !(self.max_rotation_deg >= 0.0 && self.max_rotation_deg <= 180.0) {
            return Err(Error::InvalidConfig(format!(
                "max_rotation_deg must be in [0, 180], got {}",
                self.max_rotation_deg
            )));
        }
        Ok(())
    }
}

/// Independent random stream for one sample in one epoch.
pub fn sample_rng(seed: u64, epoch: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&epoch.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..].copy_from_slice(b"augment!");
    ChaCha8Rng::from_seed(key)
}

/// Random flip then rotation. Two values are always drawn from `rng` (flip
/// coin, angle) so streams stay aligned whatever the configuration.
pub fn augment(
    sample: &InstanceSample,
    rng: &mut impl Rng,
    config: &AugmentConfig,
    ep_radius: usize,
) -> Result<InstanceSample> {
    let coin: f64 = rng.gen();
    let unit: f64 = rng.gen();
    let angle = (2.0 * unit - 1.0) * config.max_rotation_deg;
    let mut out = sample.clone();
    if coin < config.flip_prob {
        out = flip(&out, ep_radius)?;
    }
    if angle != 0.0 {
        out = rotate(&out, angle, ep_radius)?;
    }
    Ok(out)
}

/// Horizontal mirror of all image fields.
pub fn flip(sample: &InstanceSample, ep_radius: usize) -> Result<InstanceSample> {
    let s = sample.size();
    let rgb = Tensor::from_fn(sample.rgb.shape(), |n, c, y, x| sample.rgb.at(n, c, y, s - 1 - x))?;
    let mut out = InstanceSample {
        rgb,
        gt_mask: sample.gt_mask.flip_horizontal(),
        ..sample.clone()
    };
    out.refresh_points(ep_radius)?;
    Ok(out)
}

/// Rotation about the crop centre by `degrees` (counter-clockwise on
/// screen), zero fill outside the source.
pub fn rotate(sample: &InstanceSample, degrees: f64, ep_radius: usize) -> Result<InstanceSample> {
    let s = sample.size();
    let c = (s as f64 - 1.0) / 2.0;
    let (sin, cos) = degrees.to_radians().sin_cos();
    // Output pixel (u, v) samples the source at the inverse rotation.
    let source = |u: usize, v: usize| {
        let (du, dv) = (u as f64 - c, v as f64 - c);
        (c + cos * du - sin * dv, c + sin * du + cos * dv)
    };
    let mut data = vec![0f32; 3 * s * s];
    let plane = |ch: usize| sample.rgb.plane(0, ch);
    for v in 0..s {
        for u in 0..s {
            let (x, y) = source(u, v);
            for ch in 0..3 {
                data[(ch * s + v) * s + u] = bilinear_zero(plane(ch), s, x, y);
            }
        }
    }
    let gt_mask = BinaryMask::from_fn(s, s, |u, v| {
        let (x, y) = source(u, v);
        sample.gt_mask.get_or_false((x + 0.5).floor() as isize, (y + 0.5).floor() as isize)
    });
    if gt_mask.is_empty() {
        return Err(Error::EmptyMask("rotation moved the object out of the crop"));
    }
    let mut out = InstanceSample {
        rgb: Tensor::from_parts(Shape::new(1, 3, s, s), data),
        gt_mask,
        ..sample.clone()
    };
    out.refresh_points(ep_radius)?;
    Ok(out)
}

fn bilinear_zero(plane: &[f32], s: usize, x: f64, y: f64) -> f32 {
    let (xf, yf) = (x.floor(), y.floor());
    let (fx, fy) = ((x - xf) as f32, (y - yf) as f32);
    let at = |xi: f64, yi: f64| {
        if xi < 0.0 || yi < 0.0 || xi >= s as f64 || yi >= s as f64 {
            0.0
        } else {
            plane[yi as usize * s + xi as usize]
        }
    };
    let top = at(xf, yf) * (1.0 - fx) + at(xf + 1.0, yf) * fx;
    let bottom = at(xf, yf + 1.0) * (1.0 - fx) + at(xf + 1.0, yf + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}
