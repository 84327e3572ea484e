//! Brute-force reference implementations and the comparisons built on them.

use std::collections::BTreeMap;

use epseg::loss::avg_distance_loss;
use epseg::metrics::{aggregate_aiou, aggregate_iiou, aggregate_miou, edt, EvalRecord};
use epseg::ops::{conv2d, Padding};
use epseg::{BinaryMask, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub name: &'static str,
    pub cases: usize,
    /// Largest observed deviation, in the unit stated by `metric`.
    pub worst: f64,
    pub metric: &'static str,
    pub passed: bool,
}

/// Direct seven-loop cross-correlation with explicit zero padding.
pub fn conv2d_naive(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize, same: bool) -> Tensor<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let (pt, pl) = if same { ((ws.h - 1) / 2, (ws.w - 1) / 2) } else { (0, 0) };
    let (ph, pw) = if same { (xs.h + ws.h - 1, xs.w + ws.w - 1) } else { (xs.h, xs.w) };
    let oh = (ph - ws.h) / stride + 1;
    let ow = (pw - ws.w) / stride + 1;
    Tensor::from_fn(Shape::new(xs.n, ws.n, oh, ow), |n, k, oy, ox| {
        let mut acc = b[k];
        for c in 0..xs.c {
            for ky in 0..ws.h {
                for kx in 0..ws.w {
                    let iy = (oy * stride + ky) as isize - pt as isize;
                    let ix = (ox * stride + kx) as isize - pl as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                        acc += w.at(k, c, ky, kx) * x.at(n, c, iy as usize, ix as usize);
                    }
                }
            }
        }
        acc
    })
    .unwrap()
}

pub fn conv2d_oracle(cases: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (n, c, k) = (rng.gen_range(1..=2), rng.gen_range(1..=5), rng.gen_range(1..=6));
        let (kh, kw) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let (h, w) = (rng.gen_range(4..=12), rng.gen_range(4..=12));
        let stride = rng.gen_range(1..=2);
        let same = rng.gen_bool(0.5);
        let mut gen = |s: Shape| Tensor::from_fn(s, |_, _, _, _| rng.gen_range(-1.0..1.0)).unwrap();
        let x = gen(Shape::new(n, c, h, w));
        let wt = gen(Shape::new(k, c, kh, kw));
        let b: Vec<f64> = gen(Shape::new(1, 1, 1, k)).into_vec();
        let padding = if same { Padding::Same } else { Padding::Valid };
        let got = conv2d(&x, &wt, &b, stride, padding).unwrap();
        let want = conv2d_naive(&x, &wt, &b, stride, same);
        assert_eq!(got.shape(), want.shape());
        for (a, e) in got.data().iter().zip(want.data()) {
            worst = worst.max((a - e).abs() / e.abs().max(1.0));
        }
    }
    OracleReport {
        name: "conv2d vs nested loops",
        cases,
        worst,
        metric: "relative error",
        passed: worst <= 1e-6,
    }
}

/// Random mask with density drawn per mask, so some are sparse and some
/// nearly full.
pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize) -> BinaryMask {
    let density = rng.gen_range(0.001..0.6);
    let mut m = BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(density));
    if m.is_empty() {
        m.set(rng.gen_range(0..w), rng.gen_range(0..h), true);
    }
    m
}

/// Distance from every pixel to its nearest seed by checking all pairs.
pub fn edt_brute(seed: &BinaryMask) -> Vec<f64> {
    let seeds: Vec<(usize, usize)> = seed.pixels().collect();
    let (w, h) = (seed.width(), seed.height());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let best = seeds
                .iter()
                .map(|&(sx, sy)| {
                    let (dx, dy) = (sx as i64 - x as i64, sy as i64 - y as i64);
                    dx * dx + dy * dy
                })
                .min()
                .expect("non-empty seed");
            out.push((best as f64).sqrt());
        }
    }
    out
}

pub fn edt_oracle(cases: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0usize;
    for _ in 0..cases {
        let m = random_mask(&mut rng, 64, 64);
        if edt(&m).unwrap() != edt_brute(&m) {
            mismatches += 1;
        }
    }
    OracleReport {
        name: "EDT vs all-pairs brute force (64x64)",
        cases,
        worst: mismatches as f64,
        metric: "masks with any differing pixel",
        passed: mismatches == 0,
    }
}

pub fn random_records(rng: &mut impl Rng, count: usize) -> Vec<EvalRecord> {
    (0..count)
        .map(|i| EvalRecord {
            instance_id: i,
            class_id: rng.gen_range(0..9),
            // Multiples of 1/64 keep every partial sum exact in f64.
            iou: rng.gen_range(0..=64) as f64 / 64.0,
            border_distances: Vec::new(),
        })
        .collect()
}

pub fn aggregation_oracle(records: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let recs = random_records(&mut rng, records);
    let batch = 32;

    // aIoU: batches of consecutive records.
    let mut batch_means = Vec::new();
    let mut start = 0;
    while start < recs.len() {
        let end = (start + batch).min(recs.len());
        let mut s = 0.0;
        for r in &recs[start..end] {
            s += r.iou;
        }
        batch_means.push(s / (end - start) as f64);
        start = end;
    }
    let mut total = 0.0;
    for m in &batch_means {
        total += m;
    }
    let aiou = total / batch_means.len() as f64;

    // mIoU: group by class with a plain scan per class.
    let mut classes: Vec<u32> = recs.iter().map(|r| r.class_id).collect();
    classes.sort();
    classes.dedup();
    let mut per_class = BTreeMap::new();
    for &c in &classes {
        let mut s = 0.0;
        let mut n = 0;
        for r in recs.iter().filter(|r| r.class_id == c) {
            s += r.iou;
            n += 1;
        }
        per_class.insert(c, s / n as f64);
    }
    let mut s = 0.0;
    for v in per_class.values() {
        s += v;
    }
    let miou = s / per_class.len() as f64;

    let mut s = 0.0;
    for r in &recs {
        s += r.iou;
    }
    let iiou = s / recs.len() as f64;

    let got_miou = aggregate_miou(&recs).unwrap();
    let exact = aggregate_aiou(&batch_means).unwrap() == aiou
        && got_miou.miou == miou
        && got_miou.per_class == per_class
        && aggregate_iiou(&recs).unwrap() == iiou;
    OracleReport {
        name: "aIoU/mIoU/iIoU vs brute-force grouping",
        cases: records,
        worst: if exact { 0.0 } else { 1.0 },
        metric: "inexact aggregations",
        passed: exact,
    }
}

/// `(|∪| − |∩|) / √|gt|` by counting pixels.
pub fn avg_distance_by_counting(pred: &BinaryMask, gt: &BinaryMask) -> f64 {
    let (mut union, mut inter, mut area) = (0usize, 0usize, 0usize);
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            let (p, g) = (pred.get(x, y), gt.get(x, y));
            union += usize::from(p || g);
            inter += usize::from(p && g);
            area += usize::from(g);
        }
    }
    (union - inter) as f64 / (area as f64).sqrt()
}

pub fn avg_distance_oracle(cases: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..cases {
        let (w, h) = (rng.gen_range(1..=24), rng.gen_range(1..=24));
        let pred = BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(0.5));
        let gt = random_mask(&mut rng, w, h);
        let got = avg_distance_loss(&pred.to_tensor::<f64>(), &gt.to_tensor::<f64>()).unwrap();
        if got != avg_distance_by_counting(&pred, &gt) {
            mismatches += 1;
        }
    }
    OracleReport {
        name: "avg_distance loss vs pixel counting",
        cases,
        worst: mismatches as f64,
        metric: "cases not bit-equal",
        passed: mismatches == 0,
    }
}
