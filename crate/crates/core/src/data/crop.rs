use serde::{Deserialize, Serialize};

use crate::data::image::RgbImage;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::tensor::{Shape, Tensor};

/// Axis-aligned box in pixel-edge coordinates: pixel `i` spans `[i, i+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl CropBox {
    /// Box covering the inclusive pixel range `min..=max` on both axes.
    pub fn from_pixels(min_x: usize, min_y: usize, max_x: usize, max_y: usize) -> Self {
        CropBox {
            x0: min_x as f64,
            y0: min_y as f64,
            x1: max_x as f64 + 1.0,
            y1: max_y as f64 + 1.0,
        }
    }

    /// Tight box around the foreground.
    pub fn tight(mask: &BinaryMask) -> Result<Self> {
        let (x0, y0, x1, y1) = mask.bounds().ok_or(Error::EmptyMask("no foreground to crop"))?;
        Ok(CropBox::from_pixels(x0, y0, x1, y1))
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    /// Grows every side by `margin` times the box extent on that axis, then
    /// clips to a `width×height` image.
    pub fn expand(&self, margin: f64, width: usize, height: usize) -> Self {
        let (mx, my) = (margin * self.width(), margin * self.height());
        CropBox {
            x0: (self.x0 - mx).max(0.0),
            y0: (self.y0 - my).max(0.0),
            x1: (self.x1 + mx).min(width as f64),
            y1: (self.y1 + my).min(height as f64),
        }
    }

    /// Image pixel-index coordinates to crop pixel-index coordinates for a
    /// `size×size` crop.
    pub fn to_crop(&self, x: f64, y: f64, size: usize) -> (f64, f64) {
        let s = size as f64;
        (
            (x + 0.5 - self.x0) * s / self.width() - 0.5,
            (y + 0.5 - self.y0) * s / self.height() - 0.5,
        )
    }

    /// Inverse of [`CropBox::to_crop`].
    pub fn to_image(&self, u: f64, v: f64, size: usize) -> (f64, f64) {
        let s = size as f64;
        (
            self.x0 + (u + 0.5) * self.width() / s - 0.5,
            self.y0 + (v + 0.5) * self.height() / s - 0.5,
        )
    }
}

/// Crop geometry shared by training data and inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CropConfig {
    /// Side of the square network input.
    pub size: usize,
    /// Fraction of the object box added on every side.
    pub margin: f64,
    /// Radius of the extreme-point disks, in crop pixels.
    pub ep_radius: usize,
}

impl Default for CropConfig {
    fn default() -> Self {
        CropConfig {
            size: 128,
            margin: 0.08,
            ep_radius: 4,
        }
    }
}

impl CropConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::InvalidConfig("crop size must be positive".into()));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidConfig(format!("crop margin must be >= 0, got {}", self.margin)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: usize,
    pub y: usize,
}

impl Point {
    pub fn new(x: usize, y: usize) -> Self {
        Point { x, y }
    }
}

/// Outermost foreground pixels of an object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremePoints {
    pub left: Point,
    pub right: Point,
    pub top: Point,
    pub bottom: Point,
}

impl ExtremePoints {
    pub fn as_array(&self) -> [Point; 4] {
        [self.left, self.right, self.top, self.bottom]
    }
}

/// Left/right take the smallest `y` among pixels at the extreme column,
/// top/bottom the smallest `x` among pixels at the extreme row.
pub fn extreme_points(mask: &BinaryMask) -> Result<ExtremePoints> {
    let mut it = mask.pixels();
    let first = it.next().ok_or(Error::EmptyMask("extreme points of an empty mask"))?;
    let p = Point::new(first.0, first.1);
    let mut ep = ExtremePoints {
        left: p,
        right: p,
        top: p,
        bottom: p,
    };
    // Row-major order means y never decreases, so "first seen" already
    // carries the smallest y for a column tie; rows need an explicit x check.
    for (x, y) in it {
        if x < ep.left.x {
            ep.left = Point::new(x, y);
        }
        if x > ep.right.x {
            ep.right = Point::new(x, y);
        }
        if y > ep.bottom.y {
            ep.bottom = Point::new(x, y);
        }
    }
    Ok(ep)
}

/// Binary `1×1×size×size` channel of filled disks (`dx²+dy² ≤ r²`) at each
/// point.
pub fn render_ep_channel(points: &ExtremePoints, radius: usize, size: usize) -> Tensor {
    render_disks(&points.as_array(), radius, size)
}

/// Union of disks at arbitrary points, as for [`render_ep_channel`].
pub fn render_disks(points: &[Point], radius: usize, size: usize) -> Tensor {
    let r = radius as isize;
    let mut data = vec![0f32; size * size];
    for p in points {
        let (px, py) = (p.x as isize, p.y as isize);
        for y in (py - r).max(0)..=(py + r).min(size as isize - 1) {
            for x in (px - r).max(0)..=(px + r).min(size as isize - 1) {
                let (dx, dy) = (x - px, y - py);
                if dx * dx + dy * dy <= r * r {
                    data[y as usize * size + x as usize] = 1.0;
                }
            }
        }
    }
    Tensor::from_parts(Shape::new(1, 1, size, size), data)
}

/// One network-ready object crop.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSample {
    /// `1×3×S×S`, values in `[0, 1]`.
    pub rgb: Tensor,
    /// `1×1×S×S`, binary.
    pub ep_channel: Tensor,
    pub gt_mask: BinaryMask,
    pub points: ExtremePoints,
    pub class_id: u32,
    /// Crop window in source-image coordinates, margin included.
    pub bbox: CropBox,
}

impl InstanceSample {
    pub fn size(&self) -> usize {
        self.gt_mask.width()
    }

    /// Re-derives the extreme points from `gt_mask` and re-renders the channel.
    pub fn refresh_points(&mut self, ep_radius: usize) -> Result<()> {
        self.points = extreme_points(&self.gt_mask)?;
        self.ep_channel = render_ep_channel(&self.points, ep_radius, self.size());
        Ok(())
    }
}

/// Bilinear resample of `bbox` into a `1×3×size×size` tensor.
pub fn crop_rgb(image: &RgbImage, bbox: &CropBox, size: usize) -> Tensor {
    let mut data = vec![0f32; 3 * size * size];
    for v in 0..size {
        for u in 0..size {
            let (x, y) = bbox.to_image(u as f64, v as f64, size);
            for c in 0..3 {
                data[(c * size + v) * size + u] = image.bilinear_clamped(c, x, y);
            }
        }
    }
    Tensor::from_parts(Shape::new(1, 3, size, size), data)
}

/// Nearest-neighbour resample of `bbox` into a `size×size` mask.
pub fn crop_mask(mask: &BinaryMask, bbox: &CropBox, size: usize) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    BinaryMask::from_fn(size, size, |u, v| {
        let (x, y) = bbox.to_image(u as f64, v as f64, size);
        let xi = (x + 0.5).floor().clamp(0.0, (w - 1) as f64) as usize;
        let yi = (y + 0.5).floor().clamp(0.0, (h - 1) as f64) as usize;
        mask.get(xi, yi)
    })
}

/// Crops one object out of a full image. `bbox` overrides the tight box of
/// the mask when given.
pub fn extract_instance(
    image: &RgbImage,
    mask: &BinaryMask,
    class_id: u32,
    bbox: Option<CropBox>,
    config: &CropConfig,
) -> Result<InstanceSample> {
    config.validate()?;
    if mask.width() != image.width() || mask.height() != image.height() {
        return Err(Error::shape(
            "extract_instance",
            format!(
                "mask is {}x{} but image is {}x{}",
                mask.width(),
                mask.height(),
                image.width(),
                image.height()
            ),
        ));
    }
    let tight = CropBox::tight(mask)?;
    let (ow, oh) = (tight.width() as usize, tight.height() as usize);
    if ow < 2 || oh < 2 {
        return Err(Error::ObjectTooSmall { width: ow, height: oh });
    }
    let window = bbox.unwrap_or(tight).expand(config.margin, image.width(), image.height());
    let gt_mask = crop_mask(mask, &window, config.size);
    if gt_mask.is_empty() {
        return Err(Error::EmptyMask("object vanished when resampled to the crop size"));
    }
    let points = extreme_points(&gt_mask)?;
    Ok(InstanceSample {
        rgb: crop_rgb(image, &window, config.size),
        ep_channel: render_ep_channel(&points, config.ep_radius, config.size),
        gt_mask,
        points,
        class_id,
        bbox: window,
    })
}
