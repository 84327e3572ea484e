//! Exact Euclidean distance transform.
//!
//! Squared distances are computed with the separable lower-envelope method
//! (one 1-D pass down every column, then one along every row); every value
//! is an exact integer sum before the final square root.

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Stand-in for "no seed in this line" that keeps the arithmetic finite.
const FAR: f64 = 1e20;

/// Distance of every pixel to the nearest `true` pixel of `seed`, as a
/// row-major `width·height` grid.
pub fn edt(seed: &BinaryMask) -> Result<Vec<f64>> {
    Ok(squared_edt(seed)?.into_iter().map(f64::sqrt).collect())
}

/// Like [`edt`] but without the square root.
pub fn squared_edt(seed: &BinaryMask) -> Result<Vec<f64>> {
    if seed.is_empty() {
        return Err(Error::EmptyMask("distance transform needs at least one seed pixel"));
    }
    let (w, h) = (seed.width(), seed.height());
    let mut grid: Vec<f64> = seed.bits().iter().map(|&b| if b { 0.0 } else { FAR }).collect();
    let n = w.max(h);
    let mut scratch = Envelope::new(n);
    let mut line = vec![0.0; n];
    let mut out = vec![0.0; n];

    for x in 0..w {
        for y in 0..h {
            line[y] = grid[y * w + x];
        }
        scratch.transform(&line[..h], &mut out[..h]);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        line[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        scratch.transform(&line[..w], &mut out[..w]);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    Ok(grid)
}

struct Envelope {
    /// Locations of the parabolas in the lower envelope.
    v: Vec<usize>,
    /// Boundaries between consecutive envelope parabolas.
    z: Vec<f64>,
}

impl Envelope {
    fn new(n: usize) -> Self {
        Envelope {
            v: vec![0; n],
            z: vec![0.0; n + 1],
        }
    }

    /// `d[q] = min_p (q − p)² + f[p]`.
    fn transform(&mut self, f: &[f64], d: &mut [f64]) {
        let n = f.len();
        let (v, z) = (&mut self.v, &mut self.z);
        let mut k = 0usize;
        v[0] = 0;
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for q in 1..n {
            let qf = q as f64;
            let meet = |p: usize| {
                let pf = p as f64;
                ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf)
            };
            // z[0] is −∞, so this stops at k = 0 at the latest.
            let mut s = meet(v[k]);
            while s <= z[k] {
                k -= 1;
                s = meet(v[k]);
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
        }
        k = 0;
        for (q, out) in d.iter_mut().enumerate() {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let dq = q as f64 - v[k] as f64;
            *out = dq * dq + f[v[k]];
        }
    }
}
