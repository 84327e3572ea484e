//! Mask to polygon conversion and back.
//!
//! Vertices use pixel-index coordinates: the centre of pixel `(x, y)` is the
//! point `(x, y)`. A polygon through the centres of a mask's boundary pixels
//! therefore rasterizes back onto the same pixels.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::CropBox;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_EPSILON: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Crop,
    Image,
}

/// Closed polygon; the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub space: Space,
    pub points: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Signed shoelace area; positive for clockwise order on screen.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let [x0, y0] = self.points[i];
                let [x1, y1] = self.points[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum::<f64>()
            / 2.0
    }

    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.points.len();
        (0..n).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    /// No two edges meet except consecutive edges at their shared vertex.
    pub fn is_simple(&self) -> bool {
        let n = self.points.len();
        if n < 3 {
            return false;
        }
        let e: Vec<_> = self.edges().collect();
        for i in 0..n {
            if e[i].0 == e[i].1 {
                return false;
            }
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // Consecutive edges may only share their common vertex.
                    let (shared, a, b) = if j == i + 1 { (e[i].1, e[i].0, e[j].1) } else { (e[i].0, e[i].1, e[j].0) };
                    if n == 3 {
                        continue;
                    }
                    if on_segment(a, shared, b) || on_segment(b, shared, a) {
                        return false;
                    }
                } else if segments_touch(e[i].0, e[i].1, e[j].0, e[j].1) {
                    return false;
                }
            }
        }
        n > 3 || self.signed_area().abs() > 1e-12
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// `p` lies on the closed segment `a..b`.
fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    cross(a, b, p).abs() <= 1e-12
        && p[0] >= a[0].min(b[0]) - 1e-12
        && p[0] <= a[0].max(b[0]) + 1e-12
        && p[1] >= a[1].min(b[1]) - 1e-12
        && p[1] <= a[1].max(b[1]) + 1e-12
}

fn segments_touch(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (d1, d2) = (cross(c, d, a), cross(c, d, b));
    let (d3, d4) = (cross(a, b, c), cross(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

/// Pixels with probability at least `threshold` (no component filtering).
pub fn threshold_mask<T: Scalar>(probs: &Tensor<T>, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(format!("threshold must be in (0, 1), got {threshold}")));
    }
    Ok(BinaryMask::from_tensor(probs, threshold))
}

/// Thresholds and keeps the largest 4-connected component.
pub fn binarize<T: Scalar>(probs: &Tensor<T>, threshold: f64) -> Result<BinaryMask> {
    let mask = threshold_mask(probs, threshold)?.largest_component();
    if mask.is_empty() {
        return Err(Error::NoObject);
    }
    Ok(mask)
}

/// Neighbour offsets in clockwise screen order (y grows downwards),
/// starting west.
const RING: [(isize, isize); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

fn ring_index(dx: isize, dy: isize) -> usize {
    RING.iter().position(|&d| d == (dx, dy)).expect("unit offset")
}

/// Outer contour by Moore-neighbour tracing, clockwise from the top-most,
/// then left-most pixel. Tracing stops as soon as a (pixel, entry direction)
/// state repeats, so thin parts may appear twice in the chain.
pub fn trace_contour(mask: &BinaryMask) -> Result<Vec<(usize, usize)>> {
    let start = mask.pixels().next().ok_or(Error::EmptyMask("cannot trace an empty mask"))?;
    let fg = |x: isize, y: isize| mask.get_or_false(x, y);
    let mut chain = vec![start];
    let (mut cx, mut cy) = (start.0 as isize, start.1 as isize);
    // The west neighbour of the first row-major pixel is background.
    let mut back = 0usize;
    let mut seen = HashSet::from([(cx, cy, back)]);
    loop {
        let found = (1..=8).map(|k| (back + k) % 8).find(|&d| fg(cx + RING[d].0, cy + RING[d].1));
        let Some(d) = found else {
            // Isolated pixel.
            return Ok(chain);
        };
        let prev = (d + 7) % 8;
        let (nx, ny) = (cx + RING[d].0, cy + RING[d].1);
        let (bx, by) = (cx + RING[prev].0, cy + RING[prev].1);
        back = ring_index(bx - nx, by - ny);
        (cx, cy) = (nx, ny);
        if !seen.insert((cx, cy, back)) {
            break;
        }
        chain.push((cx as usize, cy as usize));
    }
    // A thin start pixel can be re-entered from a second direction.
    while chain.len() > 1 && chain.last() == Some(&start) {
        chain.pop();
    }
    Ok(chain)
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (vx, vy) = (b[0] - a[0], b[1] - a[1]);
    let (wx, wy) = (p[0] - a[0], p[1] - a[1]);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 { 0.0 } else { ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0) };
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    (dx * dx + dy * dy).sqrt()
}

/// Marks the points of `pts[lo..=hi]` that Douglas–Peucker keeps.
fn douglas_peucker(pts: &[[f64; 2]], lo: usize, hi: usize, epsilon: f64, keep: &mut [bool]) {
    let mut stack = vec![(lo, hi)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (mut best, mut best_d) = (lo, -1.0);
        for (i, &p) in pts.iter().enumerate().take(hi).skip(lo + 1) {
            let d = point_segment_distance(p, pts[lo], pts[hi]);
            if d > best_d {
                (best, best_d) = (i, d);
            }
        }
        if best_d > epsilon {
            keep[best] = true;
            stack.push((lo, best));
            stack.push((best, hi));
        }
    }
}

/// Closed Douglas–Peucker: split at the two mutually farthest points and
/// simplify both halves. Every chain point stays within `epsilon` of the
/// result.
pub fn simplify(chain: &[[f64; 2]], epsilon: f64) -> Result<Polygon> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidConfig(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(chain.len());
    for &p in chain {
        if pts.last() != Some(&p) {
            pts.push(p);
        }
    }
    while pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    if pts.len() < 3 {
        return Err(Error::DegenerateContour(format!("{} distinct points", pts.len())));
    }
    let n = pts.len();
    let (mut a, mut b, mut far) = (0, 0, -1.0);
    for i in 0..n {
        for j in i + 1..n {
            let d = (pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2);
            if d > far {
                (a, b, far) = (i, j, d);
            }
        }
    }
    let mut keep = vec![false; n];
    keep[a] = true;
    keep[b] = true;
    douglas_peucker(&pts, a, b, epsilon, &mut keep);
    // Second half runs b..n-1 then wraps to a; index it through a rotated copy.
    let rotated: Vec<[f64; 2]> = pts[b..].iter().chain(&pts[..=a]).copied().collect();
    let mut keep_rot = vec![false; rotated.len()];
    douglas_peucker(&rotated, 0, rotated.len() - 1, epsilon, &mut keep_rot);
    for (k, &kept) in keep_rot.iter().enumerate() {
        if kept {
            keep[(b + k) % n] = true;
        }
    }
    let points: Vec<[f64; 2]> = pts.iter().zip(&keep).filter(|(_, &k)| k).map(|(&p, _)| p).collect();
    if points.len() < 3 {
        return Err(Error::DegenerateContour(format!("only {} vertices survive simplification", points.len())));
    }
    Ok(Polygon {
        space: Space::Crop,
        points,
    })
}

/// Integer chain to float points.
pub fn chain_points(chain: &[(usize, usize)]) -> Vec<[f64; 2]> {
    chain.iter().map(|&(x, y)| [x as f64, y as f64]).collect()
}

/// Even-odd fill sampled at pixel centres; centres on an edge count as
/// inside. Zero-area polygons produce an empty mask.
pub fn rasterize(poly: &Polygon, width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    if poly.len() < 3 || poly.signed_area().abs() < 1e-12 {
        return mask;
    }
    const TOL: f64 = 1e-9;
    let mut xs = Vec::new();
    for y in 0..height {
        let yf = y as f64;
        xs.clear();
        for (a, b) in poly.edges() {
            let (lo, hi) = if a[1] <= b[1] { (a, b) } else { (b, a) };
            // Edge pixels are inside regardless of parity.
            if yf >= lo[1] - TOL && yf <= hi[1] + TOL {
                let (x0, x1) = if (hi[1] - lo[1]).abs() < TOL {
                    (a[0].min(b[0]), a[0].max(b[0]))
                } else {
                    let x = lo[0] + (yf - lo[1]) * (hi[0] - lo[0]) / (hi[1] - lo[1]);
                    (x, x)
                };
                fill_span(&mut mask, y, x0 - TOL, x1 + TOL);
            }
            // Half-open rule for crossings.
            if lo[1] <= yf && yf < hi[1] {
                xs.push(lo[0] + (yf - lo[1]) * (hi[0] - lo[0]) / (hi[1] - lo[1]));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            fill_span(&mut mask, y, pair[0], pair[1]);
        }
    }
    mask
}

fn fill_span(mask: &mut BinaryMask, y: usize, x0: f64, x1: f64) {
    let lo = x0.ceil().max(0.0);
    let hi = x1.floor().min(mask.width() as f64 - 1.0);
    if lo > hi {
        return;
    }
    for x in lo as usize..=hi as usize {
        mask.set(x, y, true);
    }
}

/// Maps a crop-space polygon through the inverse crop transform.
pub fn to_image_coords(poly: &Polygon, bbox: &CropBox, size: usize) -> Polygon {
    Polygon {
        space: Space::Image,
        points: poly
            .points
            .iter()
            .map(|&[u, v]| {
                let (x, y) = bbox.to_image(u, v, size);
                [x, y]
            })
            .collect(),
    }
}

/// Forward crop transform of an image-space polygon.
pub fn to_crop_coords(poly: &Polygon, bbox: &CropBox, size: usize) -> Polygon {
    Polygon {
        space: Space::Crop,
        points: poly
            .points
            .iter()
            .map(|&[x, y]| {
                let (u, v) = bbox.to_crop(x, y, size);
                [u, v]
            })
            .collect(),
    }
}

/// Crop-space rectangle through the centres of the mask's extreme rows and
/// columns.
pub fn bbox_polygon(mask: &BinaryMask) -> Result<Polygon> {
    let (x0, y0, x1, y1) = mask.bounds().ok_or(Error::NoObject)?;
    let (x0, y0, x1, y1) = (x0 as f64, y0 as f64, x1 as f64, y1 as f64);
    let (x1, y1) = (x1.max(x0 + 1.0), y1.max(y0 + 1.0));
    Ok(Polygon {
        space: Space::Crop,
        points: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
    })
}

/// Trace and simplify, falling back to `epsilon = 0` and then to the
/// bounding rectangle when the result would not be a simple polygon.
pub fn mask_to_polygon(mask: &BinaryMask, epsilon: f64) -> Result<Polygon> {
    let chain = chain_points(&trace_contour(mask)?);
    for eps in [epsilon, 0.0] {
        match simplify(&chain, eps) {
            Ok(p) if p.is_simple() => return Ok(p),
            Ok(_) | Err(Error::DegenerateContour(_)) => {}
            Err(e) => return Err(e),
        }
    }
    log::debug!("polygon fallback to bounding rectangle");
    bbox_polygon(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn rect(w: usize, h: usize, x0: usize, y0: usize, rw: usize, rh: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| (x0..x0 + rw).contains(&x) && (y0..y0 + rh).contains(&y))
    }

    fn probs(m: &BinaryMask, hi: f32, lo: f32) -> Tensor {
        m.to_tensor::<f32>().map(|v| if v > 0.5 { hi } else { lo })
    }

    #[test]
    fn binarize_cases() {
        let all = Tensor::full(Shape::new(1, 1, 4, 4), 0.9f32).unwrap();
        assert_eq!(binarize(&all, 0.5).unwrap().count(), 16);
        let two = BinaryMask::from_fn(8, 8, |x, y| (y < 2 && x < 5) || (y == 6 && x > 4));
        let b = binarize(&probs(&two, 0.8, 0.1), 0.5).unwrap();
        assert_eq!(b.count(), 10);
        let zero = Tensor::zeros(Shape::new(1, 1, 4, 4)).unwrap();
        assert!(matches!(binarize::<f32>(&zero, 0.5), Err(Error::NoObject)));
        assert!(binarize(&all, 1.0).is_err());
        assert!(binarize(&all, 0.0).is_err());
    }

    #[test]
    fn trace_small_shapes() {
        let dot = rect(5, 5, 2, 3, 1, 1);
        assert_eq!(trace_contour(&dot).unwrap(), vec![(2, 3)]);
        let sq = rect(5, 5, 1, 1, 3, 3);
        assert_eq!(
            trace_contour(&sq).unwrap(),
            vec![(1, 1), (2, 1), (3, 1), (3, 2), (3, 3), (2, 3), (1, 3), (1, 2)]
        );
        assert!(trace_contour(&BinaryMask::new(3, 3)).is_err());
    }

    #[test]
    fn rectangle_simplifies_to_corners() {
        let m = rect(12, 10, 2, 3, 7, 5);
        let chain = chain_points(&trace_contour(&m).unwrap());
        let p = simplify(&chain, 0.5).unwrap();
        assert_eq!(p.points, vec![[2.0, 3.0], [8.0, 3.0], [8.0, 7.0], [2.0, 7.0]]);
        let p0 = simplify(&chain, 0.0).unwrap();
        assert_eq!(p0.len(), 4);
        assert!(p.is_simple());
        assert!(p.signed_area() > 0.0, "clockwise on screen");
    }

    #[test]
    fn epsilon_zero_keeps_direction_changes() {
        // Staircase: every step is a direction change.
        let m = BinaryMask::from_fn(6, 6, |x, y| x + y <= 5);
        let chain = chain_points(&trace_contour(&m).unwrap());
        let p = simplify(&chain, 0.0).unwrap();
        let n = chain.len();
        for i in 0..n {
            let (a, b, c) = (chain[(i + n - 1) % n], chain[i], chain[(i + 1) % n]);
            if cross(a, b, c).abs() > 1e-12 {
                assert!(p.points.contains(&b), "{b:?} dropped");
            }
        }
    }

    #[test]
    fn degenerate_chains() {
        assert!(simplify(&[[0.0, 0.0], [1.0, 0.0]], 0.0).is_err());
        assert!(simplify(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [1.0, 0.0]], 0.0).is_err());
        assert!(simplify(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], -1.0).is_err());
    }

    #[test]
    fn rasterize_square_and_triangle() {
        let sq = Polygon {
            space: Space::Crop,
            points: vec![[1.0, 1.0], [4.0, 1.0], [4.0, 4.0], [1.0, 4.0]],
        };
        let m = rasterize(&sq, 8, 8);
        assert_eq!(m.count(), 16);
        assert_eq!(m, rect(8, 8, 1, 1, 4, 4));
        let flat = Polygon {
            space: Space::Crop,
            points: vec![[0.0, 0.0], [2.0, 2.0], [4.0, 4.0]],
        };
        assert!(rasterize(&flat, 8, 8).is_empty());
        let diamond = Polygon {
            space: Space::Crop,
            points: vec![[2.0, 0.0], [4.0, 2.0], [2.0, 4.0], [0.0, 2.0]],
        };
        // Centres with |x-2|+|y-2| <= 2.
        assert_eq!(rasterize(&diamond, 5, 5).count(), 13);
    }

    #[test]
    fn coordinate_maps() {
        let sq = Polygon {
            space: Space::Crop,
            points: vec![[0.0, 0.0], [5.5, 1.25], [3.0, 7.0]],
        };
        let id = CropBox::from_pixels(0, 0, 15, 15);
        assert_eq!(to_image_coords(&sq, &id, 16).points, sq.points);
        let b = CropBox { x0: 10.0, y0: 20.0, x1: 42.0, y1: 36.0 };
        let corner = Polygon { space: Space::Crop, points: vec![[-0.5, -0.5]] };
        assert_eq!(to_image_coords(&corner, &b, 16).points, vec![[9.5, 19.5]]);
        let back = to_crop_coords(&to_image_coords(&sq, &b, 16), &b, 16);
        for (p, q) in back.points.iter().zip(&sq.points) {
            assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn simplicity_checks() {
        let bow = Polygon {
            space: Space::Crop,
            points: vec![[0.0, 0.0], [2.0, 2.0], [2.0, 0.0], [0.0, 2.0]],
        };
        assert!(!bow.is_simple());
        let spike = Polygon {
            space: Space::Crop,
            points: vec![[0.0, 0.0], [4.0, 0.0], [2.0, 0.0], [2.0, 3.0]],
        };
        assert!(!spike.is_simple());
        let tri = Polygon {
            space: Space::Crop,
            points: vec![[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]],
        };
        assert!(tri.is_simple());
    }

    #[test]
    fn polygon_json_schema() {
        let p = Polygon {
            space: Space::Image,
            points: vec![[1.5, 2.0], [3.0, 4.0], [0.0, 1.0]],
        };
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v, serde_json::json!({"space": "image", "points": [[1.5, 2.0], [3.0, 4.0], [0.0, 1.0]]}));
    }

    #[test]
    fn line_mask_falls_back_to_rectangle() {
        let line = rect(8, 8, 1, 3, 5, 1);
        let p = mask_to_polygon(&line, 1.0).unwrap();
        assert!(p.is_simple());
        assert_eq!(p.len(), 4);
    }
}
