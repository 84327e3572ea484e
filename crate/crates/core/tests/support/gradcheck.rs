//! Central finite-difference checks of every backward kernel in `f64`.
//!
//! Each trial draws fresh shapes and values, projects the kernel output onto
//! a random direction `r` so the objective is `Σ r·f(x)`, and compares the
//! analytic gradient against `(L(x+h) − L(x−h)) / 2h` at sampled coordinates.

use epseg::loss::{Loss, LossKind};
use epseg::ops::{
    concat_channels, conv2d, conv2d_backward, depthwise_separable_conv2d, depthwise_separable_conv2d_backward,
    maxpool2d, maxpool2d_backward, relu, relu_backward, sigmoid, sigmoid_backward, split_channels, upsample_nearest2x,
    upsample_nearest2x_backward, Padding,
};
use epseg::unet::{ConvBlock, Network, UNetConfig};
use epseg::{Shape, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor so near-zero gradients are compared absolutely.
const FLOOR: f64 = 1e-6;
/// Coordinates sampled per gradient tensor per trial.
const COORDS: usize = 6;

type T = Tensor<f64>;

#[derive(Debug, Clone)]
pub struct GradReport {
    pub name: &'static str,
    pub trials: usize,
    pub checks: usize,
    pub max_rel_error: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

struct Tally {
    checks: usize,
    worst: f64,
}

impl Tally {
    /// Compares `analytic` to the numeric gradient of `f` at sampled entries
    /// of `x`.
    fn check(&mut self, rng: &mut ChaCha8Rng, x: &T, analytic: &[f64], f: impl Fn(&T) -> f64) {
        assert_eq!(x.len(), analytic.len(), "gradient length");
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.shuffle(rng);
        for &i in idx.iter().take(COORDS) {
            let mut plus = x.clone();
            plus.data_mut()[i] += STEP;
            let mut minus = x.clone();
            minus.data_mut()[i] -= STEP;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * STEP);
            self.worst = self.worst.max(relative_error(analytic[i], numeric));
            self.checks += 1;
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: Shape, lo: f64, hi: f64) -> T {
    let data = (0..shape.len()).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn dot(a: &T, b: &T) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn run(name: &'static str, trials: usize, seed: u64, mut trial: impl FnMut(&mut ChaCha8Rng, &mut Tally)) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally { checks: 0, worst: 0.0 };
    for _ in 0..trials {
        trial(&mut rng, &mut tally);
    }
    GradReport {
        name,
        trials,
        checks: tally.checks,
        max_rel_error: tally.worst,
    }
}

pub fn conv2d_check(trials: usize, seed: u64) -> GradReport {
    run("conv2d", trials, seed, |rng, t| {
        let (n, c, k) = (rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3));
        let (kh, kw) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let stride = rng.gen_range(1..=2);
        let padding = if rng.gen_bool(0.5) { Padding::Same } else { Padding::Valid };
        let (h, w) = (rng.gen_range(4..=7), rng.gen_range(4..=7));
        let x = uniform(rng, Shape::new(n, c, h, w), -1.0, 1.0);
        let wt = uniform(rng, Shape::new(k, c, kh, kw), -1.0, 1.0);
        let b = uniform(rng, Shape::new(1, 1, 1, k), -1.0, 1.0);
        let out = conv2d(&x, &wt, b.data(), stride, padding).unwrap();
        let r = uniform(rng, out.shape(), -1.0, 1.0);
        let g = conv2d_backward(&x, &wt, stride, padding, &r).unwrap();
        let obj = |x: &T, wt: &T, b: &T| dot(&r, &conv2d(x, wt, b.data(), stride, padding).unwrap());
        t.check(rng, &x, g.input.data(), |v| obj(v, &wt, &b));
        t.check(rng, &wt, g.weights.data(), |v| obj(&x, v, &b));
        t.check(rng, &b, &g.bias, |v| obj(&x, &wt, v));
    })
}

pub fn separable_check(trials: usize, seed: u64) -> GradReport {
    run("depthwise_separable", trials, seed, |rng, t| {
        let (n, c, k) = (rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3));
        let ks = rng.gen_range(1..=3);
        let (h, w) = (rng.gen_range(3..=6), rng.gen_range(3..=6));
        let x = uniform(rng, Shape::new(n, c, h, w), -1.0, 1.0);
        let dw = uniform(rng, Shape::new(c, 1, ks, ks), -1.0, 1.0);
        let pw = uniform(rng, Shape::new(k, c, 1, 1), -1.0, 1.0);
        let b = uniform(rng, Shape::new(1, 1, 1, k), -1.0, 1.0);
        let out = depthwise_separable_conv2d(&x, &dw, &pw, b.data()).unwrap();
        let r = uniform(rng, out.shape(), -1.0, 1.0);
        let g = depthwise_separable_conv2d_backward(&x, &dw, &pw, &r).unwrap();
        let obj = |x: &T, dw: &T, pw: &T, b: &T| dot(&r, &depthwise_separable_conv2d(x, dw, pw, b.data()).unwrap());
        t.check(rng, &x, g.input.data(), |v| obj(v, &dw, &pw, &b));
        t.check(rng, &dw, g.depthwise.data(), |v| obj(&x, v, &pw, &b));
        t.check(rng, &pw, g.pointwise.data(), |v| obj(&x, &dw, v, &b));
        t.check(rng, &b, &g.bias, |v| obj(&x, &dw, &pw, v));
    })
}

pub fn maxpool_check(trials: usize, seed: u64) -> GradReport {
    run("maxpool", trials, seed, |rng, t| {
        let shape = Shape::new(rng.gen_range(1..=2), rng.gen_range(1..=3), 2 * rng.gen_range(1..=3), 2 * rng.gen_range(1..=3));
        // Distinct values at least 0.1 apart so no perturbation changes a winner.
        let mut vals: Vec<f64> = (0..shape.len()).map(|i| i as f64 * 0.1 + rng.gen_range(0.0..0.01)).collect();
        vals.shuffle(rng);
        let x = Tensor::from_vec(shape, vals).unwrap();
        let (out, argmax) = maxpool2d(&x).unwrap();
        let r = uniform(rng, out.shape(), -1.0, 1.0);
        let g = maxpool2d_backward(&r, &argmax, shape).unwrap();
        t.check(rng, &x, g.data(), |v| dot(&r, &maxpool2d(v).unwrap().0));
    })
}

pub fn upsample_check(trials: usize, seed: u64) -> GradReport {
    run("upsample", trials, seed, |rng, t| {
        let shape = Shape::new(rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=4));
        let x = uniform(rng, shape, -1.0, 1.0);
        let r = uniform(rng, upsample_nearest2x(&x).shape(), -1.0, 1.0);
        let g = upsample_nearest2x_backward(&r).unwrap();
        t.check(rng, &x, g.data(), |v| dot(&r, &upsample_nearest2x(v)));
    })
}

pub fn concat_check(trials: usize, seed: u64) -> GradReport {
    run("concat", trials, seed, |rng, t| {
        let (n, h, w) = (rng.gen_range(1..=2), rng.gen_range(1..=4), rng.gen_range(1..=4));
        let (ca, cb) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let a = uniform(rng, Shape::new(n, ca, h, w), -1.0, 1.0);
        let b = uniform(rng, Shape::new(n, cb, h, w), -1.0, 1.0);
        let r = uniform(rng, Shape::new(n, ca + cb, h, w), -1.0, 1.0);
        let (ga, gb) = split_channels(&r, ca).unwrap();
        t.check(rng, &a, ga.data(), |v| dot(&r, &concat_channels(v, &b).unwrap()));
        t.check(rng, &b, gb.data(), |v| dot(&r, &concat_channels(&a, v).unwrap()));
    })
}

pub fn relu_check(trials: usize, seed: u64) -> GradReport {
    run("relu", trials, seed, |rng, t| {
        let shape = Shape::new(rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=5), rng.gen_range(1..=5));
        // Kept away from the kink at zero.
        let data = (0..shape.len())
            .map(|_| rng.gen_range(0.05..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let x = Tensor::from_vec(shape, data).unwrap();
        let r = uniform(rng, shape, -1.0, 1.0);
        let g = relu_backward(&x, &r).unwrap();
        t.check(rng, &x, g.data(), |v| dot(&r, &relu(v)));
    })
}

pub fn sigmoid_check(trials: usize, seed: u64) -> GradReport {
    run("sigmoid", trials, seed, |rng, t| {
        let shape = Shape::new(rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=5), rng.gen_range(1..=5));
        let x = uniform(rng, shape, -6.0, 6.0);
        let r = uniform(rng, shape, -1.0, 1.0);
        let g = sigmoid_backward(&sigmoid(&x), &r).unwrap();
        t.check(rng, &x, g.data(), |v| dot(&r, &sigmoid(v)));
    })
}

pub fn loss_check(kind: LossKind, trials: usize, seed: u64) -> GradReport {
    let name = match kind {
        LossKind::AvgDistance => "avg_distance loss",
        LossKind::SoftIou => "soft_iou loss",
        LossKind::BceIou => "bce_iou loss",
    };
    run(name, trials, seed, |rng, t| {
        let shape = Shape::new(rng.gen_range(1..=3), 1, rng.gen_range(2..=6), rng.gen_range(2..=6));
        let y = uniform(rng, shape, 0.05, 0.95);
        let mut labels: Vec<f64> = (0..shape.len()).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect();
        let plane = shape.h * shape.w;
        for n in 0..shape.n {
            labels[n * plane + rng.gen_range(0..plane)] = 1.0;
        }
        let truth = Tensor::from_vec(shape, labels).unwrap();
        let loss = Loss {
            kind,
            lambda: rng.gen_range(0.0..=1.0),
        };
        let (_, g) = loss.batch_value_and_grad(&y, &truth).unwrap();
        t.check(rng, &y, g.data(), |v| loss.batch_value(v, &truth).unwrap());
    })
}

/// Whole-network backward pass against finite differences of the loss.
pub fn network_check(trials: usize, seed: u64) -> GradReport {
    run("unet end-to-end", trials, seed, |rng, t| {
        let cfg = UNetConfig {
            base_width: 2,
            levels: 2,
            input_channels: rng.gen_range(3..=4),
            conv_block: if rng.gen_bool(0.5) { ConvBlock::Standard } else { ConvBlock::DepthwiseSeparable },
            convs_per_level: 1,
            input_size: 4,
            seed: rng.gen(),
        };
        let net = Network::<f64>::build(&cfg).unwrap();
        let x = uniform(rng, Shape::new(2, cfg.input_channels, 4, 4), 0.0, 1.0);
        let truth = Tensor::from_fn(Shape::new(2, 1, 4, 4), |_, _, y, x| f64::from(u8::from((1..3).contains(&y) && x < 3)))
            .unwrap();
        let loss = Loss::new(LossKind::SoftIou);
        let cache = net.forward_train(&x).unwrap();
        let (_, dy) = loss.batch_value_and_grad(cache.output(), &truth).unwrap();
        let (grads, dx) = net.backward_with_input(&cache, &dy).unwrap();
        let objective = |net: &Network<f64>, x: &T| loss.batch_value(&net.forward(x).unwrap(), &truth).unwrap();
        t.check(rng, &x, dx.data(), |v| objective(&net, v));
        let p = rng.gen_range(0..grads.len());
        let base = net.params().to_vec();
        t.check(rng, &base[p], grads[p].data(), |v| {
            let mut params = base.clone();
            params[p] = v.clone();
            objective(&Network::from_params(&cfg, params).unwrap(), &x)
        });
    })
}

/// Every kernel and loss at `trials` trials each.
pub fn full_suite(trials: usize, seed: u64) -> Vec<GradReport> {
    vec![
        conv2d_check(trials, seed),
        separable_check(trials, seed + 1),
        maxpool_check(trials, seed + 2),
        upsample_check(trials, seed + 3),
        concat_check(trials, seed + 4),
        relu_check(trials, seed + 5),
        sigmoid_check(trials, seed + 6),
        loss_check(LossKind::AvgDistance, trials, seed + 7),
        loss_check(LossKind::SoftIou, trials, seed + 8),
        loss_check(LossKind::BceIou, trials, seed + 9),
    ]
}
