//! Procedural datasets used by tests, examples and the CLI `synth` command.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::crop::{extreme_points, render_ep_channel, CropBox, InstanceSample};
use crate::data::dataset::Scene;
use crate::data::image::RgbImage;
use crate::mask::BinaryMask;
use crate::tensor::{Shape, Tensor};

pub const ELLIPSE: u32 = 0;
pub const RECTANGLE: u32 = 1;

pub fn toy_classes() -> BTreeMap<String, u32> {
    BTreeMap::from([("ellipse".to_string(), ELLIPSE), ("rectangle".to_string(), RECTANGLE)])
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    angle: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
        (u / self.rx).powi(2) + (v / self.ry).powi(2) <= 1.0
    }

    fn mask(&self, w: usize, h: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| self.contains(x as f64, y as f64))
    }
}

fn random_color(rng: &mut impl Rng) -> [f32; 3] {
    [rng.gen(), rng.gen(), rng.gen()]
}

fn color_distance(a: [f32; 3], b: [f32; 3]) -> f32 {
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum()
}

/// Colour at least `min_dist` (L1) away from `other`.
fn contrasting_color(rng: &mut impl Rng, other: [f32; 3], min_dist: f32) -> [f32; 3] {
    loop {
        let c = random_color(rng);
        if color_distance(c, other) >= min_dist {
            return c;
        }
    }
}

fn noisy(rng: &mut impl Rng, c: [f32; 3], amp: f32) -> [f32; 3] {
    c.map(|v| (v + amp * (rng.gen::<f32>() - 0.5)).clamp(0.0, 1.0))
}

/// Scenes of one ellipse (even index) or rectangle (odd index) on a noisy
/// gradient background.
pub fn toy_scenes(n: usize, width: usize, height: usize, seed: u64) -> Vec<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| toy_scene(&mut rng, i, width, height)).collect()
}

fn toy_scene(rng: &mut ChaCha8Rng, i: usize, w: usize, h: usize) -> Scene {
    let bg_a = random_color(rng);
    let bg_b = random_color(rng);
    let fg = contrasting_color(rng, bg_a, 0.9);
    let (wf, hf) = (w as f64, h as f64);
    let rx = rng.gen_range(0.15..0.3) * wf;
    let ry = rng.gen_range(0.15..0.3) * hf;
    let cx = rng.gen_range(rx + 1.0..wf - rx - 1.0);
    let cy = rng.gen_range(ry + 1.0..hf - ry - 1.0);
    let class_id = if i % 2 == 0 { ELLIPSE } else { RECTANGLE };
    let mask = if class_id == ELLIPSE {
        Ellipse { cx, cy, rx, ry, angle: rng.gen_range(0.0..std::f64::consts::PI) }.mask(w, h)
    } else {
        BinaryMask::from_fn(w, h, |x, y| (x as f64 - cx).abs() <= rx && (y as f64 - cy).abs() <= ry)
    };
    let image = RgbImage::from_fn(w, h, |x, y| {
        if mask.get(x, y) {
            noisy(rng, fg, 0.1)
        } else {
            let t = x as f32 / w as f32;
            let base = [0, 1, 2].map(|c| bg_a[c] * (1.0 - t) + bg_b[c] * t * 0.3);
            noisy(rng, base, 0.1)
        }
    });
    Scene { image, mask, class_id }
}

/// Crops of two overlapping, identically coloured ellipses. The target is
/// picked by a coin flip, so only the extreme-point channel tells which one
/// to segment.
pub fn two_shape_samples(n: usize, size: usize, ep_radius: usize, seed: u64) -> Vec<InstanceSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| two_shape_sample(&mut rng, size, ep_radius)).collect()
}

fn two_shape_sample(rng: &mut ChaCha8Rng, s: usize, ep_radius: usize) -> InstanceSample {
    let sf = s as f64;
    let ellipse = |rng: &mut ChaCha8Rng| {
        let rx = rng.gen_range(0.2..0.35) * sf;
        let ry = rng.gen_range(0.2..0.35) * sf;
        let r = rx.max(ry);
        Ellipse {
            cx: rng.gen_range(r..sf - 1.0 - r),
            cy: rng.gen_range(r..sf - 1.0 - r),
            rx,
            ry,
            angle: rng.gen_range(0.0..std::f64::consts::PI),
        }
    };
    let (a, b) = loop {
        let (ea, eb) = (ellipse(rng), ellipse(rng));
        let (ma, mb) = (ea.mask(s, s), eb.mask(s, s));
        let inter = ma.bits().iter().zip(mb.bits()).filter(|(&p, &q)| p && q).count();
        let smaller = ma.count().min(mb.count());
        if smaller > 0 && inter * 10 >= smaller && inter * 2 <= smaller {
            break (ma, mb);
        }
    };
    let gt_mask = if rng.gen_bool(0.5) { a.clone() } else { b.clone() };
    let bg = random_color(rng);
    let fg = contrasting_color(rng, bg, 0.9);
    let mut data = vec![0f32; 3 * s * s];
    for y in 0..s {
        for x in 0..s {
            let base = if a.get(x, y) || b.get(x, y) { fg } else { bg };
            let px = noisy(rng, base, 0.1);
            for c in 0..3 {
                data[(c * s + y) * s + x] = px[c];
            }
        }
    }
    let points = extreme_points(&gt_mask).expect("ellipse mask is non-empty");
    InstanceSample {
        rgb: Tensor::from_parts(Shape::new(1, 3, s, s), data),
        ep_channel: render_ep_channel(&points, ep_radius, s),
        gt_mask,
        points,
        class_id: 0,
        bbox: CropBox::from_pixels(0, 0, s - 1, s - 1),
    }
}

/// Random hole-free 4-connected blob spanning at least 2×2 pixels.
pub fn random_blob(rng: &mut impl Rng, w: usize, h: usize) -> BinaryMask {
    assert!(w >= 4 && h >= 4, "blob canvas must be at least 4x4");
    let (wf, hf) = (w as f64, h as f64);
    loop {
        let parts: Vec<Ellipse> = (0..rng.gen_range(1..=4))
            .map(|_| Ellipse {
                cx: rng.gen_range(0.25..0.75) * wf,
                cy: rng.gen_range(0.25..0.75) * hf,
                rx: rng.gen_range(1.0..(wf / 3.0).max(1.5)),
                ry: rng.gen_range(1.0..(hf / 3.0).max(1.5)),
                angle: rng.gen_range(0.0..std::f64::consts::PI),
            })
            .collect();
        let m = BinaryMask::from_fn(w, h, |x, y| parts.iter().any(|e| e.contains(x as f64, y as f64)));
        let m = m.largest_component().fill_holes();
        if let Some((x0, y0, x1, y1)) = m.bounds() {
            if x1 > x0 && y1 > y0 {
                return m;
            }
        }
    }
}
