//! Training loop with early stopping, and offline evaluation.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::CheckpointMeta;
use crate::data::{augment, make_batch, sample_rng, AugmentConfig, CropConfig, InstanceSample};
use crate::error::{Error, Result};
use crate::loss::{Loss, LossKind, DEFAULT_LAMBDA};
use crate::mask::BinaryMask;
use crate::metrics::{border_error, instance_iou, EvalRecord, EvalReport};
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::Tensor;
use crate::unet::{Network, UNetConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation aIoU improvement before stopping.
    pub patience: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub loss: LossKind,
    /// IoU weight for [`LossKind::BceIou`].
    pub loss_lambda: f64,
    pub augment: AugmentConfig,
    pub ep_radius: usize,
    pub seed: u64,
    pub unet: UNetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            max_steps: None,
            loss: LossKind::AvgDistance,
            loss_lambda: DEFAULT_LAMBDA,
            augment: AugmentConfig::default(),
            ep_radius: CropConfig::default().ep_radius,
            seed: 0,
            unet: UNetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be >= 1".into()));
        }
        if self.max_steps == Some(0) {
            return Err(Error::InvalidConfig("max_steps must be >= 1".into()));
        }
        self.augment.validate()?;
        self.unet.validate()
    }

    pub fn with_ep(&self) -> bool {
        self.unet.input_channels == 4
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_aiou: f64,
    /// Optimizer steps completed by the end of this epoch.
    pub steps: usize,
    pub skipped_samples: usize,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }

    /// Per-epoch `(train_loss, val_aiou)` pairs, without timings.
    pub fn trajectory(&self) -> Vec<(f64, f64)> {
        self.epochs.iter().map(|e| (e.train_loss, e.val_aiou)).collect()
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Weights of the best validation epoch.
    pub network: Network<f32>,
    pub meta: CheckpointMeta,
    pub history: TrainHistory,
}

/// Anything that maps an input batch to per-pixel probabilities.
pub trait Predictor {
    fn input_channels(&self) -> usize;
    fn predict(&self, x: &Tensor) -> Result<Tensor>;
}

impl Predictor for Network<f32> {
    fn input_channels(&self) -> usize {
        self.config().input_channels
    }

    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x)
    }
}

/// Mean over batches of the mean instance IoU, predictions thresholded at
/// 0.5 and batches taken in order.
pub fn validation_aiou<P: Predictor + ?Sized>(model: &P, samples: &[InstanceSample], batch_size: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let with_ep = model.input_channels() == 4;
    let mut batch_means = Vec::new();
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&InstanceSample> = chunk.iter().collect();
        let (x, _) = make_batch(&refs, with_ep)?;
        let probs = model.predict(&x)?;
        let mut sum = 0.0;
        for (i, s) in chunk.iter().enumerate() {
            let pred = BinaryMask::from_tensor(&probs.item_tensor(i), 0.5);
            sum += instance_iou(&pred, &s.gt_mask)?;
        }
        batch_means.push(sum / chunk.len() as f64);
    }
    crate::metrics::aggregate_aiou(&batch_means)
}

/// Trains with validation aIoU as the model-selection metric.
pub fn train(train: &[InstanceSample], val: &[InstanceSample], config: &TrainConfig) -> Result<TrainOutcome> {
    let batch = config.batch_size;
    train_with_validator(train, val, config, |net, val| validation_aiou(net, val, batch))
}

/// [`train`] with a custom validation metric (higher is better).
pub fn train_with_validator(
    train: &[InstanceSample],
    val: &[InstanceSample],
    config: &TrainConfig,
    mut validator: impl FnMut(&Network<f32>, &[InstanceSample]) -> Result<f64>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let size = config.unet.input_size;
    if let Some(s) = train.iter().chain(val).find(|s| s.size() != size) {
        return Err(Error::shape(
            "train",
            format!("sample size {} does not match network input size {size}", s.size()),
        ));
    }
    let with_ep = config.with_ep();
    let loss = Loss {
        kind: config.loss,
        lambda: config.loss_lambda,
    };
    let mut net = Network::<f32>::build(&config.unet)?;
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr), net.params())?;
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best_params = net.params().to_vec();
    let mut best_score = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut steps = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.max_epochs {
        let started = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut sample_rng(config.seed, epoch as u64, u64::MAX));
        let (mut loss_sum, mut batches, mut skipped) = (0.0, 0usize, 0usize);
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            if config.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let mut owned = Vec::with_capacity(idx.len());
            for &i in idx {
                if config.augment.is_disabled() {
                    owned.push(train[i].clone());
                    continue;
                }
                let mut rng = sample_rng(config.seed, epoch as u64, i as u64);
                match augment(&train[i], &mut rng, &config.augment, config.ep_radius) {
                    Ok(s) => owned.push(s),
                    Err(Error::EmptyMask(why)) => {
                        log::warn!("epoch {epoch}: sample {i} skipped: {why}");
                        skipped += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            if owned.is_empty() {
                continue;
            }
            let refs: Vec<&InstanceSample> = owned.iter().collect();
            let (x, gt) = make_batch(&refs, with_ep)?;
            let cache = net.forward_train(&x)?;
            let (value, grad) = loss.batch_value_and_grad(cache.output(), &gt)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    value,
                    loss: config.loss.to_string(),
                    epoch,
                    batch: b,
                });
            }
            let grads = net.backward(&cache, &grad)?;
            adam.step(net.params_mut(), &grads)?;
            steps += 1;
            loss_sum += value;
            batches += 1;
        }
        let val_aiou = validator(&net, val)?;
        let record = EpochRecord {
            epoch,
            train_loss: if batches > 0 { loss_sum / batches as f64 } else { f64::NAN },
            val_aiou,
            steps,
            skipped_samples: skipped,
            wall_secs: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.5} val aIoU {:.4} ({} steps, {:.1}s)",
            record.train_loss,
            val_aiou,
            steps,
            record.wall_secs
        );
        history.epochs.push(record);
        if val_aiou > best_score {
            best_score = val_aiou;
            best_params.clone_from_slice(net.params());
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                history.stopped_early = true;
                break;
            }
        }
        if config.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
    }
    let network = Network::from_params(&config.unet, best_params)?;
    let meta = CheckpointMeta {
        epoch: history.best_epoch,
        val_aiou: best_score,
        seed: config.seed,
        crop: CropConfig {
            size: config.unet.input_size,
            margin: CropConfig::default().margin,
            ep_radius: config.ep_radius,
        },
    };
    Ok(TrainOutcome { network, meta, history })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub batch_size: usize,
    pub threshold: f64,
    /// Histogram bin width in pixels.
    pub bin_width: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            batch_size: 32,
            threshold: 0.5,
            bin_width: 1.0,
        }
    }
}

/// Full metric suite on `samples` with augmentation off. `with_ep` states
/// whether the data carries the extreme-point channel.
pub fn evaluate<P: Predictor + ?Sized>(
    model: &P,
    samples: &[InstanceSample],
    with_ep: bool,
    class_names: &BTreeMap<u32, String>,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let provided = if with_ep { 4 } else { 3 };
    if model.input_channels() != provided {
        return Err(Error::ChannelMismatch {
            expected: model.input_channels(),
            actual: provided,
        });
    }
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut records = Vec::with_capacity(samples.len());
    let mut batch_means = Vec::new();
    for (b, chunk) in samples.chunks(config.batch_size.max(1)).enumerate() {
        let refs: Vec<&InstanceSample> = chunk.iter().collect();
        let (x, _) = make_batch(&refs, with_ep)?;
        let probs = model.predict(&x)?;
        let mut sum = 0.0;
        for (i, s) in chunk.iter().enumerate() {
            let pred = BinaryMask::from_tensor(&probs.item_tensor(i), config.threshold);
            let iou = instance_iou(&pred, &s.gt_mask)?;
            sum += iou;
            let border_distances = if pred.is_empty() { Vec::new() } else { border_error(&pred, &s.gt_mask)? };
            records.push(EvalRecord {
                instance_id: b * config.batch_size.max(1) + i,
                class_id: s.class_id,
                iou,
                border_distances,
            });
        }
        batch_means.push(sum / chunk.len() as f64);
    }
    EvalReport::build(&records, &batch_means, class_names, config.bin_width)
}
