use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use epseg::checkpoint::{load_checkpoint, save_checkpoint};
use epseg::data::synthetic::{toy_classes, toy_scenes};
use epseg::data::{load_dataset, write_dataset, AugmentConfig, CropConfig, RgbImage, Split};
use epseg::inference::{segment, SegmentOptions};
use epseg::loss::LossKind;
use epseg::metrics::EvalReport;
use epseg::polygon::Polygon;
use epseg::trainer::{evaluate, train, EvalConfig, TrainConfig};
use epseg::unet::UNetConfig;
use epseg::Error;

#[derive(Parser)]
#[command(name = "epseg", version, about = "Extreme-points instance segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write a checkpoint plus its history.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split and write a metric report.
    Eval(EvalArgs),
    /// Segment one object from four extreme points.
    Infer(InferArgs),
    /// Run the HTTP service.
    Serve(epseg_service::ServeArgs),
    /// Export the border-error histogram of a report as CSV.
    Report(ReportArgs),
    /// Write a synthetic toy dataset.
    Synth(SynthArgs),
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be > 0, got {s}"))
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be >= 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must be in (0, 1), got {s}"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be >= 0, got {s}"))
    }
}

#[derive(Clone, Debug)]
struct Points(Vec<[f64; 2]>);

/// `x1,y1,...,x4,y4`.
fn parse_points(s: &str) -> Result<Points, String> {
    let values = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != 8 {
        return Err(format!("expected 8 numbers (4 points), got {}", values.len()));
    }
    Ok(Points(values.chunks(2).map(|c| [c[0], c[1]]).collect()))
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    AvgDistance,
    SoftIou,
    BceIou,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::AvgDistance => LossKind::AvgDistance,
            LossArg::SoftIou => LossKind::SoftIou,
            LossArg::BceIou => LossKind::BceIou,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    All,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory containing index.json.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// History JSON path [default: <out>.history.json].
    #[arg(long)]
    history: Option<PathBuf>,
    /// Add the extreme-points input channel (default).
    #[arg(long, overrides_with = "no_ep")]
    ep: bool,
    /// RGB-only network.
    #[arg(long, overrides_with = "ep")]
    no_ep: bool,
    #[arg(long, value_enum, default_value = "avg-distance")]
    loss: LossArg,
    /// IoU weight of the bce-iou loss.
    #[arg(long, default_value_t = 0.5, value_parser = non_negative)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-3, value_parser = positive_f64)]
    lr: f64,
    #[arg(long, default_value_t = 32, value_parser = positive_usize)]
    batch: usize,
    #[arg(long, default_value_t = 100, value_parser = positive_usize)]
    epochs: usize,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 10, value_parser = positive_usize)]
    patience: usize,
    /// Stop after this many optimizer steps.
    #[arg(long, value_parser = positive_usize)]
    max_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Base filter count.
    #[arg(long, default_value_t = 16, value_parser = positive_usize)]
    width: usize,
    /// Encoder levels.
    #[arg(long, default_value_t = 5, value_parser = positive_usize)]
    levels: usize,
    /// Crop side length in pixels.
    #[arg(long, default_value_t = 128, value_parser = positive_usize)]
    size: usize,
    /// Fraction of the object box added per side before cropping.
    #[arg(long, default_value_t = 0.08, value_parser = non_negative)]
    margin: f64,
    /// Extreme-point disk radius in crop pixels.
    #[arg(long, default_value_t = 4)]
    ep_radius: usize,
    /// Disable flip and rotation augmentation.
    #[arg(long)]
    no_augment: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// Report JSON output path.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, default_value = "val")]
    split: SplitArg,
    #[arg(long, default_value_t = 32, value_parser = positive_usize)]
    batch: usize,
    #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
    threshold: f64,
    /// Histogram bin width in pixels.
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64)]
    bin_width: f64,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// PNG image.
    #[arg(long)]
    image: PathBuf,
    /// Four extreme points as x1,y1,x2,y2,x3,y3,x4,y4 in image pixels.
    #[arg(long, value_parser = parse_points, allow_hyphen_values = true)]
    points: Points,
    /// Polygon JSON output path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
    threshold: f64,
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    epsilon: f64,
    /// Crop margin [default: the checkpoint's].
    #[arg(long, value_parser = non_negative)]
    margin: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON written by `eval`.
    #[arg(long)]
    eval: PathBuf,
    /// CSV output path.
    #[arg(long)]
    hist: PathBuf,
    /// Write fractions instead of counts.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8, value_parser = positive_usize)]
    count: usize,
    /// Image side length.
    #[arg(long, default_value_t = 64, value_parser = positive_usize)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Put every k-th scene in the validation split; 0 keeps all in train.
    #[arg(long, default_value_t = 0)]
    val_every: usize,
}

/// Failures split by exit code.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidRequest(_) => Failure::Usage(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn run_train(a: TrainArgs) -> CmdResult {
    let with_ep = !a.no_ep;
    let cfg = TrainConfig {
        lr: a.lr,
        batch_size: a.batch,
        max_epochs: a.epochs,
        patience: a.patience,
        max_steps: a.max_steps,
        loss: a.loss.into(),
        loss_lambda: a.lambda,
        augment: if a.no_augment { AugmentConfig::disabled() } else { AugmentConfig::default() },
        ep_radius: a.ep_radius,
        seed: a.seed,
        unet: UNetConfig {
            base_width: a.width,
            levels: a.levels,
            input_channels: if with_ep { 4 } else { 3 },
            input_size: a.size,
            seed: a.seed,
            ..UNetConfig::default()
        },
    };
    cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
    let crop = CropConfig {
        size: a.size,
        margin: a.margin,
        ep_radius: a.ep_radius,
    };
    let data = load_dataset(&a.data)?;
    let train_set = data.load_split(Split::Train, &crop)?;
    let mut val_set = data.load_split(Split::Val, &crop)?;
    if val_set.is_empty() {
        log::warn!("dataset has no val split; validating on the training samples");
        val_set = train_set.clone();
    }
    log::info!("training on {} samples, validating on {}", train_set.len(), val_set.len());
    let mut outcome = train(&train_set, &val_set, &cfg)?;
    outcome.meta.crop = crop;
    save_checkpoint(&outcome.network, &outcome.meta, &a.out)?;
    let history_path = a.history.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".history.json");
        PathBuf::from(p)
    });
    write_json(&history_path, &outcome.history)?;
    let best = outcome.history.best();
    println!(
        "best epoch {} val aIoU {:.4}; {} epochs{}",
        best.epoch,
        best.val_aiou,
        outcome.history.epochs.len(),
        if outcome.history.stopped_early { " (early stop)" } else { "" }
    );
    println!("checkpoint: {}", a.out.display());
    println!("history: {}", history_path.display());
    Ok(())
}

fn run_eval(a: EvalArgs) -> CmdResult {
    let ckpt = load_checkpoint(&a.ckpt)?;
    let data = load_dataset(&a.data)?;
    let crop = ckpt.meta.crop;
    let samples = match a.split {
        SplitArg::Train => data.load_split(Split::Train, &crop)?,
        SplitArg::Val => data.load_split(Split::Val, &crop)?,
        SplitArg::All => {
            let mut all = data.load_split(Split::Train, &crop)?;
            all.extend(data.load_split(Split::Val, &crop)?);
            all
        }
    };
    let with_ep = ckpt.network.config().input_channels == 4;
    let cfg = EvalConfig {
        batch_size: a.batch,
        threshold: a.threshold,
        bin_width: a.bin_width,
    };
    let report = evaluate(&ckpt.network, &samples, with_ep, &data.index().class_names(), &cfg)?;
    fs::write(&a.report, report.to_json()? + "\n").with_context(|| format!("writing {}", a.report.display()))?;
    println!("{}", report.summary());
    Ok(())
}

#[derive(Serialize)]
struct InferOutput {
    polygon: Polygon,
    confidence: f64,
    inference_ms: f64,
    bbox: [f64; 4],
}

fn run_infer(a: InferArgs) -> CmdResult {
    let ckpt = load_checkpoint(&a.ckpt)?;
    let image = RgbImage::load(&a.image)?;
    let options = SegmentOptions {
        threshold: a.threshold,
        epsilon: a.epsilon,
        margin: a.margin.unwrap_or(ckpt.meta.crop.margin),
        ep_radius: ckpt.meta.crop.ep_radius,
    };
    let seg = segment(&ckpt.network, &image, &a.points.0, &options)?;
    let b = seg.bbox;
    write_json(
        &a.out,
        &InferOutput {
            polygon: seg.polygon,
            confidence: seg.confidence,
            inference_ms: seg.inference_ms,
            bbox: [b.x0, b.y0, b.x1, b.y1],
        },
    )?;
    println!("inference {:.1} ms, confidence {:.3}", seg.inference_ms, seg.confidence);
    Ok(())
}

fn run_serve(a: epseg_service::ServeArgs) -> CmdResult {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting runtime")?;
    rt.block_on(epseg_service::serve(a))?;
    Ok(())
}

fn run_report(a: ReportArgs) -> CmdResult {
    let text = fs::read_to_string(&a.eval).with_context(|| format!("reading {}", a.eval.display()))?;
    let report = EvalReport::from_json(&text).with_context(|| format!("parsing {}", a.eval.display()))?;
    let total = report.histogram.total();
    let hist = if a.normalize { report.histogram.normalize() } else { report.histogram };
    fs::write(&a.hist, hist.to_csv()).with_context(|| format!("writing {}", a.hist.display()))?;
    println!("{} bins, {total} border pixels", hist.counts.len());
    Ok(())
}

fn run_synth(a: SynthArgs) -> CmdResult {
    let scenes = toy_scenes(a.count, a.size, a.size, a.seed);
    let every = a.val_every;
    let index = write_dataset(&a.out, &scenes, toy_classes(), |i| {
        if every > 0 && i % every == every - 1 {
            Split::Val
        } else {
            Split::Train
        }
    })?;
    println!("wrote {} scenes to {}", index.samples.len(), a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = match cli.command {
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Infer(a) => run_infer(a),
        Command::Serve(a) => run_serve(a),
        Command::Report(a) => run_report(a),
        Command::Synth(a) => run_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("usage error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
