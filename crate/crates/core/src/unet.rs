//! Encoder-decoder network with skip connections.
//!
//! Encoder level `i` runs at `input_size / 2^i` with `2^i · f` channels;
//! levels are joined by 2×2 max pooling. The decoder mirrors the encoder
//! with nearest-neighbour upsampling, and every decoder level concatenates
//! the same-resolution encoder features (skip first, then upsampled) before
//! its convolutions. A 1×1 convolution plus sigmoid produces the per-pixel
//! foreground probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{
    concat_channels, conv2d, conv2d_backward_impl, depthwise_conv2d, depthwise_conv2d_backward,
    maxpool2d, maxpool2d_backward, relu, relu_backward, sigmoid, sigmoid_backward, split_channels,
    upsample_nearest2x, upsample_nearest2x_backward, Padding,
};
use crate::tensor::{Scalar, Shape, Tensor};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvBlock {
    #[default]
    Standard,
    DepthwiseSeparable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UNetConfig {
    /// Channels at the first level (`f`).
    pub base_width: usize,
    /// Number of resolutions, bottleneck included.
    pub levels: usize,
    /// 3 for RGB, 4 for RGB plus the extreme-points channel.
    pub input_channels: usize,
    pub conv_block: ConvBlock,
    /// 3×3 convolutions per level.
    #[serde(default = "default_convs")]
    pub convs_per_level: usize,
    pub input_size: usize,
    pub seed: u64,
}

fn default_convs() -> usize {
    2
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            base_width: 16,
            levels: 5,
            input_channels: 4,
            conv_block: ConvBlock::Standard,
            convs_per_level: 2,
            input_size: 128,
            seed: 0,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_width < 1 {
            return Err(Error::InvalidConfig("base_width must be at least 1".into()));
        }
        if self.levels < 2 {
            return Err(Error::InvalidConfig("levels must be at least 2".into()));
        }
        if self.convs_per_level < 1 {
            return Err(Error::InvalidConfig("convs_per_level must be at least 1".into()));
        }
        if self.input_channels < 1 {
            return Err(Error::InvalidConfig("input_channels must be at least 1".into()));
        }
        if self.levels > 16 {
            return Err(Error::InvalidConfig("levels must be at most 16".into()));
        }
        let factor = 1usize << (self.levels - 1);
        if self.input_size == 0 || self.input_size % factor != 0 {
            return Err(Error::InvalidConfig(format!(
                "input_size {} must be a positive multiple of 2^(levels-1) = {factor}",
                self.input_size
            )));
        }
        Ok(())
    }

    /// Channels produced by encoder level `level` (and consumed by the
    /// decoder at the same level).
    pub fn level_channels(&self, level: usize) -> usize {
        self.base_width << level
    }

    pub fn level_size(&self, level: usize) -> usize {
        self.input_size >> level
    }
}

/// Name and shape of one parameter tensor, in storage order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Shape,
    /// Fan-in for He initialization; 0 marks a bias.
    #[serde(skip)]
    fan_in: usize,
}

#[derive(Debug, Clone, Copy)]
enum Layer {
    Standard { weight: usize, bias: usize },
    Separable { depthwise: usize, pointwise: usize, bias: usize },
}

#[derive(Debug, Clone)]
struct Layout {
    specs: Vec<ParamSpec>,
    encoder: Vec<Vec<Layer>>,
    /// Indexed by level; level `levels-1` is the bottleneck and has no
    /// decoder stage.
    decoder: Vec<Vec<Layer>>,
    head: Layer,
}

impl Layout {
    fn new(cfg: &UNetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut specs = Vec::new();
        let mut push = |name: String, shape: Shape, fan_in: usize| {
            specs.push(ParamSpec { name, shape, fan_in });
            specs.len() - 1
        };
        let conv = |push: &mut dyn FnMut(String, Shape, usize) -> usize,
                        prefix: String,
                        cin: usize,
                        cout: usize,
                        k: usize,
                        block: ConvBlock| match block {
            ConvBlock::Standard => Layer::Standard {
                weight: push(format!("{prefix}.weight"), Shape::new(cout, cin, k, k), cin * k * k),
                bias: push(format!("{prefix}.bias"), Shape::new(1, 1, 1, cout), 0),
            },
            ConvBlock::DepthwiseSeparable => Layer::Separable {
                depthwise: push(format!("{prefix}.depthwise"), Shape::new(cin, 1, k, k), k * k),
                pointwise: push(format!("{prefix}.pointwise"), Shape::new(cout, cin, 1, 1), cin),
                bias: push(format!("{prefix}.bias"), Shape::new(1, 1, 1, cout), 0),
            },
        };

        let mut encoder = Vec::with_capacity(cfg.levels);
        let mut cin = cfg.input_channels;
        for level in 0..cfg.levels {
            let cout = cfg.level_channels(level);
            let mut layers = Vec::new();
            for j in 0..cfg.convs_per_level {
                layers.push(conv(&mut push, format!("enc{level}.conv{j}"), cin, cout, 3, cfg.conv_block));
                cin = cout;
            }
            encoder.push(layers);
        }
        let mut decoder = vec![Vec::new(); cfg.levels];
        for level in (0..cfg.levels - 1).rev() {
            let cout = cfg.level_channels(level);
            let mut c = cfg.level_channels(level) + cfg.level_channels(level + 1);
            for j in 0..cfg.convs_per_level {
                decoder[level].push(conv(&mut push, format!("dec{level}.conv{j}"), c, cout, 3, cfg.conv_block));
                c = cout;
            }
        }
        let head = conv(&mut push, "head".into(), cfg.level_channels(0), 1, 1, ConvBlock::Standard);
        Ok(Layout {
            specs,
            encoder,
            decoder,
            head,
        })
    }
}

/// Parameter names and shapes for `config`, in storage order.
pub fn param_specs(config: &UNetConfig) -> Result<Vec<ParamSpec>> {
    Ok(Layout::new(config)?.specs)
}

/// Exact number of scalar parameters a network built from `config` holds.
pub fn count_params(config: &UNetConfig) -> Result<usize> {
    Ok(param_specs(config)?.iter().map(|s| s.shape.len()).sum())
}

/// An instantiated network: configuration plus weights.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar = f32> {
    config: UNetConfig,
    layout: Layout,
    params: Vec<Tensor<T>>,
}

/// Activations retained by [`Network::forward_train`] for the backward pass.
pub struct ForwardCache<T: Scalar> {
    /// For every convolution in execution order: its input, the depthwise
    /// intermediate (separable blocks only) and its post-ReLU output.
    convs: Vec<ConvCache<T>>,
    pools: Vec<(Vec<usize>, Shape)>,
    head_input: Tensor<T>,
    output: Tensor<T>,
}

struct ConvCache<T: Scalar> {
    input: Tensor<T>,
    mid: Option<Tensor<T>>,
    output: Tensor<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }
}

impl<T: Scalar> Network<T> {
    /// Builds a network with He-uniform weights drawn from a ChaCha stream
    /// seeded by `config.seed`; biases start at zero. The draw is done in
    /// double precision, so `f32` and `f64` networks with the same seed hold
    /// the same weights up to rounding.
    pub fn build(config: &UNetConfig) -> Result<Self> {
        let layout = Layout::new(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = layout
            .specs
            .iter()
            .map(|spec| {
                if spec.fan_in == 0 {
                    return Tensor::zeros(spec.shape);
                }
                let bound = (6.0 / spec.fan_in as f64).sqrt();
                let data = (0..spec.shape.len())
                    .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
                    .collect();
                Tensor::from_vec(spec.shape, data)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Network {
            config: config.clone(),
            layout,
            params,
        })
    }

    /// Assembles a network from explicit parameter tensors, checking them
    /// against the layout implied by `config`.
    pub fn from_params(config: &UNetConfig, params: Vec<Tensor<T>>) -> Result<Self> {
        let layout = Layout::new(config)?;
        if params.len() != layout.specs.len() {
            return Err(Error::shape(
                "network",
                format!("expected {} parameter tensors, got {}", layout.specs.len(), params.len()),
            ));
        }
        for (spec, p) in layout.specs.iter().zip(&params) {
            if spec.shape != p.shape() {
                return Err(Error::shape(
                    "network",
                    format!("{} should be {}, got {}", spec.name, spec.shape, p.shape()),
                ));
            }
        }
        Ok(Network {
            config: config.clone(),
            layout,
            params,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.layout.specs
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        let cfg = &self.config;
        if s.c != cfg.input_channels {
            return Err(Error::ChannelMismatch {
                expected: cfg.input_channels,
                actual: s.c,
            });
        }
        if s.h != cfg.input_size || s.w != cfg.input_size {
            return Err(Error::shape(
                "forward",
                format!("input {s} must be {0}x{0} spatially", cfg.input_size),
            ));
        }
        Ok(())
    }

    /// Per-pixel foreground probabilities, `N×1×S×S`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        self.run(x.clone(), None)
    }

    /// Forward pass that also records what [`Network::backward`] needs.
    pub fn forward_train(&self, x: &Tensor<T>) -> Result<ForwardCache<T>> {
        self.check_input(x)?;
        let mut cache = ForwardCache {
            convs: Vec::new(),
            pools: Vec::new(),
            head_input: x.clone(),
            output: x.clone(),
        };
        cache.output = self.run(x.clone(), Some(&mut cache))?;
        Ok(cache)
    }

    fn conv_layer(&self, layer: Layer, x: Tensor<T>, cache: Option<&mut ForwardCache<T>>) -> Result<Tensor<T>> {
        let (pre, mid) = match layer {
            Layer::Standard { weight, bias } => {
                (conv2d(&x, &self.params[weight], self.params[bias].data(), 1, Padding::Same)?, None)
            }
            Layer::Separable { depthwise, pointwise, bias } => {
                let mid = depthwise_conv2d(&x, &self.params[depthwise])?;
                let out = conv2d(&mid, &self.params[pointwise], self.params[bias].data(), 1, Padding::Valid)?;
                (out, Some(mid))
            }
        };
        let out = relu(&pre);
        if let Some(cache) = cache {
            cache.convs.push(ConvCache {
                input: x,
                mid,
                output: out.clone(),
            });
        }
        Ok(out)
    }

    fn run(&self, x: Tensor<T>, mut cache: Option<&mut ForwardCache<T>>) -> Result<Tensor<T>> {
        let levels = self.config.levels;
        let mut h = x;
        let mut skips = Vec::with_capacity(levels - 1);
        for level in 0..levels {
            if level > 0 {
                let (pooled, argmax) = maxpool2d(&h)?;
                if let Some(c) = cache.as_deref_mut() {
                    c.pools.push((argmax, h.shape()));
                }
                h = pooled;
            }
            for &layer in &self.layout.encoder[level] {
                h = self.conv_layer(layer, h, cache.as_deref_mut())?;
            }
            if level + 1 < levels {
                skips.push(h.clone());
            }
        }
        for level in (0..levels - 1).rev() {
            let up = upsample_nearest2x(&h);
            h = concat_channels(&skips[level], &up)?;
            for &layer in &self.layout.decoder[level] {
                h = self.conv_layer(layer, h, cache.as_deref_mut())?;
            }
        }
        let Layer::Standard { weight, bias } = self.layout.head else {
            unreachable!("head is a standard convolution")
        };
        let logits = conv2d(&h, &self.params[weight], self.params[bias].data(), 1, Padding::Valid)?;
        if let Some(c) = cache {
            c.head_input = h;
        }
        Ok(sigmoid(&logits))
    }

    /// Backpropagates `grad_output` (gradient of the objective with respect
    /// to the probabilities) and returns one gradient per parameter tensor.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_output: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.backward_impl(cache, grad_output, false).map(|(g, _)| g)
    }

    /// Like [`Network::backward`], additionally returning the gradient with
    /// respect to the network input.
    pub fn backward_with_input(
        &self,
        cache: &ForwardCache<T>,
        grad_output: &Tensor<T>,
    ) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
        let (g, dx) = self.backward_impl(cache, grad_output, true)?;
        Ok((g, dx.expect("input gradient requested")))
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache<T>,
        grad_output: &Tensor<T>,
        want_input: bool,
    ) -> Result<(Vec<Tensor<T>>, Option<Tensor<T>>)> {
        if grad_output.shape() != cache.output.shape() {
            return Err(Error::shape(
                "backward",
                format!("gradient {} does not match output {}", grad_output.shape(), cache.output.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.params.len()];
        let levels = self.config.levels;

        let dlogits = sigmoid_backward(&cache.output, grad_output)?;
        let Layer::Standard { weight, bias } = self.layout.head else {
            unreachable!("head is a standard convolution")
        };
        let (dh, dw, db) =
            conv2d_backward_impl(&cache.head_input, &self.params[weight], 1, Padding::Valid, &dlogits, true)?;
        grads[weight] = Some(dw);
        grads[bias] = Some(Tensor::from_parts(self.params[bias].shape(), db));
        let mut dh = dh.expect("requested");

        // Conv caches are consumed in reverse execution order.
        let mut conv_idx = cache.convs.len();
        let mut dskips: Vec<Option<Tensor<T>>> = vec![None; levels];
        for level in 0..levels - 1 {
            for &layer in self.layout.decoder[level].iter().rev() {
                conv_idx -= 1;
                dh = self.conv_layer_backward(layer, &cache.convs[conv_idx], &dh, true, &mut grads)?
                    .expect("requested");
            }
            let (dskip, dup) = split_channels(&dh, self.config.level_channels(level))?;
            dskips[level] = Some(dskip);
            dh = upsample_nearest2x_backward(&dup)?;
        }
        for level in (0..levels).rev() {
            if let Some(ds) = dskips[level].take() {
                dh.add_assign(&ds)?;
            }
            let layers = &self.layout.encoder[level];
            for (j, &layer) in layers.iter().enumerate().rev() {
                conv_idx -= 1;
                let need_dx = want_input || level > 0 || j > 0;
                if let Some(d) = self.conv_layer_backward(layer, &cache.convs[conv_idx], &dh, need_dx, &mut grads)? {
                    dh = d;
                }
            }
            if level > 0 {
                let (argmax, shape) = &cache.pools[level - 1];
                dh = maxpool2d_backward(&dh, argmax, *shape)?;
            }
        }
        debug_assert_eq!(conv_idx, 0);
        let grads = grads
            .into_iter()
            .map(|g| g.expect("every parameter receives a gradient"))
            .collect();
        Ok((grads, want_input.then_some(dh)))
    }

    fn conv_layer_backward(
        &self,
        layer: Layer,
        cc: &ConvCache<T>,
        grad_out: &Tensor<T>,
        want_input: bool,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<Option<Tensor<T>>> {
        let dpre = relu_backward(&cc.output, grad_out)?;
        match layer {
            Layer::Standard { weight, bias } => {
                let (dx, dw, db) =
                    conv2d_backward_impl(&cc.input, &self.params[weight], 1, Padding::Same, &dpre, want_input)?;
                grads[weight] = Some(dw);
                grads[bias] = Some(Tensor::from_parts(self.params[bias].shape(), db));
                Ok(dx)
            }
            Layer::Separable { depthwise, pointwise, bias } => {
                let mid = cc.mid.as_ref().expect("separable layers cache their intermediate");
                let (dmid, dpw, db) =
                    conv2d_backward_impl(mid, &self.params[pointwise], 1, Padding::Valid, &dpre, true)?;
                let (dx, ddw) = depthwise_conv2d_backward(&cc.input, &self.params[depthwise], &dmid.expect("requested"))?;
                grads[pointwise] = Some(dpw);
                grads[depthwise] = Some(ddw);
                grads[bias] = Some(Tensor::from_parts(self.params[bias].shape(), db));
                Ok(want_input.then_some(dx))
            }
        }
    }
}
