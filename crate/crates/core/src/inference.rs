//! Four clicked extreme points plus a full image in, polygon out.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{crop_rgb, render_disks, CropBox, Point, RgbImage};
use crate::error::{Error, Result};
use crate::polygon::{binarize, mask_to_polygon, rasterize, to_image_coords, Polygon};
use crate::tensor::{Shape, Tensor};
use crate::unet::Network;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentOptions {
    pub threshold: f64,
    pub epsilon: f64,
    pub margin: f64,
    pub ep_radius: usize,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        SegmentOptions {
            threshold: crate::polygon::DEFAULT_THRESHOLD,
            epsilon: crate::polygon::DEFAULT_EPSILON,
            margin: 0.08,
            ep_radius: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Image-space outline.
    pub polygon: Polygon,
    /// Mean foreground probability over the crop pixels the polygon covers.
    pub confidence: f64,
    /// Wall time of the forward pass alone.
    pub inference_ms: f64,
    /// Crop window, margin included.
    pub bbox: CropBox,
}

/// Rounds and bounds-checks four clicked points.
pub fn validate_points(points: &[[f64; 2]], width: usize, height: usize) -> Result<[Point; 4]> {
    if points.len() != 4 {
        return Err(Error::InvalidRequest(format!("expected 4 extreme points, got {}", points.len())));
    }
    let mut out = [Point::new(0, 0); 4];
    for (i, &[x, y]) in points.iter().enumerate() {
        let inside = x.is_finite() && y.is_finite() && x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64;
        if !inside {
            return Err(Error::InvalidRequest(format!(
                "point {i} ({x}, {y}) lies outside the {width}x{height} image"
            )));
        }
        out[i] = Point::new(
            (x.round() as usize).min(width - 1),
            (y.round() as usize).min(height - 1),
        );
    }
    Ok(out)
}

/// Pixel box spanned by the points; zero extent on either axis is an error.
pub fn points_bbox(points: &[Point; 4]) -> Result<CropBox> {
    let min_x = points.iter().map(|p| p.x).min().expect("4 points");
    let max_x = points.iter().map(|p| p.x).max().expect("4 points");
    let min_y = points.iter().map(|p| p.y).min().expect("4 points");
    let max_y = points.iter().map(|p| p.y).max().expect("4 points");
    if max_x == min_x || max_y == min_y {
        return Err(Error::DegenerateBox {
            width: max_x - min_x,
            height: max_y - min_y,
        });
    }
    Ok(CropBox::from_pixels(min_x, min_y, max_x, max_y))
}

/// Builds the network input for one request: RGB crop plus, for 4-channel
/// networks, disks at the clicked points mapped into the crop.
pub fn prepare_input(
    image: &RgbImage,
    points: &[Point; 4],
    bbox: &CropBox,
    size: usize,
    input_channels: usize,
    ep_radius: usize,
) -> Result<Tensor> {
    let rgb = crop_rgb(image, bbox, size);
    match input_channels {
        3 => Ok(rgb),
        4 => {
            let mapped: Vec<Point> = points
                .iter()
                .map(|p| {
                    let (u, v) = bbox.to_crop(p.x as f64, p.y as f64, size);
                    let clamp = |t: f64| t.round().clamp(0.0, (size - 1) as f64) as usize;
                    Point::new(clamp(u), clamp(v))
                })
                .collect();
            let ep = render_disks(&mapped, ep_radius, size);
            let mut data = rgb.into_vec();
            data.extend_from_slice(ep.data());
            Tensor::from_vec(Shape::new(1, 4, size, size), data)
        }
        c => Err(Error::InvalidConfig(format!("unsupported input channel count {c}"))),
    }
}

/// Runs the whole pipeline for one object.
pub fn segment(
    network: &Network<f32>,
    image: &RgbImage,
    points: &[[f64; 2]],
    options: &SegmentOptions,
) -> Result<Segmentation> {
    if !(options.threshold > 0.0 && options.threshold < 1.0) {
        return Err(Error::InvalidRequest(format!("threshold must be in (0, 1), got {}", options.threshold)));
    }
    if !(options.epsilon >= 0.0 && options.epsilon.is_finite()) {
        return Err(Error::InvalidRequest(format!("epsilon must be >= 0, got {}", options.epsilon)));
    }
    let pts = validate_points(points, image.width(), image.height())?;
    let bbox = points_bbox(&pts)?.expand(options.margin, image.width(), image.height());
    let cfg = network.config();
    let x = prepare_input(image, &pts, &bbox, cfg.input_size, cfg.input_channels, options.ep_radius)?;
    let started = Instant::now();
    let probs = network.forward(&x)?;
    let inference_ms = (started.elapsed().as_secs_f64() * 1e3).max(1e-6);
    let mask = binarize(&probs, options.threshold)?;
    let crop_poly = mask_to_polygon(&mask, options.epsilon)?;
    let covered = rasterize(&crop_poly, cfg.input_size, cfg.input_size);
    let p = probs.data();
    let (sum, n) = covered
        .pixels()
        .fold((0.0, 0usize), |(s, n), (x, y)| (s + p[y * cfg.input_size + x] as f64, n + 1));
    Ok(Segmentation {
        polygon: to_image_coords(&crop_poly, &bbox, cfg.input_size),
        confidence: if n > 0 { sum / n as f64 } else { 0.0 },
        inference_ms,
        bbox,
    })
}
