use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma, Rgb};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Planar RGB image with channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0.0; 3 * width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut img = RgbImage::new(width, height);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for (c, v) in px.into_iter().enumerate() {
                    img.data[(c * height + y) * width + x] = v.clamp(0.0, 1.0);
                }
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Channel-major samples, `3·height·width` long.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, px: [f32; 3]) {
        for (c, v) in px.into_iter().enumerate() {
            self.data[(c * self.height + y) * self.width + x] = v;
        }
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        RgbImage::from_fn(img.width() as usize, img.height() as usize, |x, y| {
            let Rgb(p) = *img.get_pixel(x as u32, y as u32);
            p.map(|v| v as f32 / 255.0)
        })
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let q = |c| (self.get(c, x as usize, y as usize) * 255.0).round().clamp(0.0, 255.0) as u8;
            Rgb([q(0), q(1), q(2)])
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(RgbImage::from_rgb8(&img.to_rgb8()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_rgb8()
            .save_with_format(path, ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(Error::Decode)?;
        Ok(RgbImage::from_rgb8(&img.to_rgb8()))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb8().write_to(&mut out, ImageFormat::Png).map_err(Error::Decode)?;
        Ok(out.into_inner())
    }

    /// Bilinear sample at pixel-index coordinates, clamping to the edge.
    pub fn bilinear_clamped(&self, c: usize, x: f64, y: f64) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
        let top = self.get(c, x0, y0) * (1.0 - fx) + self.get(c, x1, y0) * fx;
        let bottom = self.get(c, x0, y1) * (1.0 - fx) + self.get(c, x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Reads an 8-bit grayscale mask; values of 128 and above are foreground.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let gray = img.to_luma8();
    Ok(BinaryMask::from_fn(gray.width() as usize, gray.height() as usize, |x, y| {
        gray.get_pixel(x as u32, y as u32).0[0] >= 128
    }))
}

/// Writes `0`/`255` grayscale PNG.
pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if mask.get(x as usize, y as usize) { 255 } else { 0 }])
    })
    .save_with_format(path, ImageFormat::Png)
    .map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}
