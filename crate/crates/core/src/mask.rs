use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// A `height×width` grid of booleans, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::shape(
                "mask",
                format!("{width}x{height} mask needs {} bits, got {}", width * height, bits.len()),
            ));
        }
        Ok(BinaryMask { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        BinaryMask { width, height, bits }
    }

    /// Pixels whose value is at least `threshold` (plane 0 of item 0).
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>, threshold: f64) -> Self {
        let s = t.shape();
        let plane = t.plane(0, 0);
        BinaryMask {
            width: s.w,
            height: s.h,
            bits: plane.iter().map(|v| v.to_f64_lossy() >= threshold).collect(),
        }
    }

    /// `1×1×H×W` tensor of zeros and ones.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_parts(
            Shape::new(1, 1, self.height, self.width),
            self.bits.iter().map(|&b| if b { T::one() } else { T::zero() }).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-range coordinates read as background.
    #[inline]
    pub fn get_or_false(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Foreground pixel coordinates in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    /// Tight bounding box `(min_x, min_y, max_x, max_y)`, inclusive.
    pub fn bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut it = self.pixels();
        let (x, y) = it.next()?;
        Some(it.fold((x, y, x, y), |(x0, y0, x1, y1), (x, y)| {
            (x0.min(x), y0.min(y), x1.max(x), y1.max(y))
        }))
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn flip_horizontal(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.same_dims(other) && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// 4-connected components of `value` pixels as a label grid (`0` marks
    /// other pixels), plus the size of every label starting at label 1.
    /// Labels are assigned in row-major order of each component's first pixel.
    pub fn components(&self, value: bool) -> (Vec<u32>, Vec<usize>) {
        let (w, h) = (self.width, self.height);
        let mut labels = vec![0u32; w * h];
        let mut sizes = Vec::new();
        let mut stack = Vec::new();
        for start in 0..w * h {
            if self.bits[start] != value || labels[start] != 0 {
                continue;
            }
            sizes.push(0);
            let label = sizes.len() as u32;
            labels[start] = label;
            stack.push(start);
            while let Some(i) = stack.pop() {
                sizes[label as usize - 1] += 1;
                let (x, y) = (i % w, i / w);
                let mut visit = |j: usize| {
                    if self.bits[j] == value && labels[j] == 0 {
                        labels[j] = label;
                        stack.push(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
            }
        }
        (labels, sizes)
    }

    /// Largest 4-connected foreground component; ties go to the component
    /// found first in row-major order.
    pub fn largest_component(&self) -> BinaryMask {
        let (labels, sizes) = self.components(true);
        let Some(best) = sizes
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, usize)>, (i, &s)| match acc {
                Some((_, bs)) if bs >= s => acc,
                _ => Some((i, s)),
            })
            .map(|(i, _)| i as u32 + 1)
        else {
            return BinaryMask::new(self.width, self.height);
        };
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: labels.iter().map(|&l| l == best).collect(),
        }
    }

    /// Sets every background pixel that is not 4-connected to the image edge.
    pub fn fill_holes(&self) -> BinaryMask {
        let (labels, _) = self.components(false);
        let (w, h) = (self.width, self.height);
        let mut outside = std::collections::HashSet::new();
        for x in 0..w {
            outside.insert(labels[x]);
            outside.insert(labels[(h - 1) * w + x]);
        }
        for y in 0..h {
            outside.insert(labels[y * w]);
            outside.insert(labels[y * w + w - 1]);
        }
        BinaryMask {
            width: w,
            height: h,
            bits: self
                .bits
                .iter()
                .zip(&labels)
                .map(|(&b, l)| b || !outside.contains(l))
                .collect(),
        }
    }
}
