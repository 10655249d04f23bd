//! `gamseg`: music boundary segmentation from the command line.
//!
//! Subcommands wire the library into one workflow: generate a synthetic
//! corpus, extract features, train (optionally from a pretrained
//! checkpoint), tune hyperparameters, predict boundaries, evaluate at a time
//! tolerance, and run the classical novelty baseline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use gamseg::annotations::{
    corpus_stats, parse_annotation_file, parse_two_column_file, serialize_annotation,
    serialize_two_column,
};
use gamseg::baseline::{
    baseline_segment, DEFAULT_BASELINE_THRESHOLD, DEFAULT_KERNEL_HALF_WIDTH,
};
use gamseg::eval::{
    evaluate_corpus, predict_boundaries, serialize_prediction, ChunkParams, PeakParams,
};
use gamseg::features::{
    extract_features, write_feature_file, FeatureConfig, FeatureMatrix, Matrix,
};
use gamseg::neuralnet::{load_checkpoint, save_checkpoint, ArchitectureConfig};
use gamseg::synth::generate_corpus;
use gamseg::training::{
    grid_search, manifest_from_generated, metrics_to_csv, train, AugmentConfig, DatasetManifest,
    Init, Split, TrainingConfig,
};

#[derive(Parser)]
#[command(
    name = "gamseg",
    version,
    about = "Music boundary segmentation: features, CNN+BiLSTM training, peak picking, evaluation"
)]
struct Cli {
    /// Seed for every random choice (init, shuffling, dropout, synthesis)
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for per-track stages (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Print progress to stderr
    #[arg(long, global = true, default_value_t = false)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the 98-row feature matrix from an audio file
    Extract(ExtractArgs),
    /// Convert between annotation formats
    AnnotateConvert(ConvertArgs),
    /// Boundary-category histogram and segment-duration summary
    Stats(StatsArgs),
    /// Generate a synthetic corpus with known boundaries
    Synth(SynthArgs),
    /// Train a boundary detector on a manifest
    Train(TrainArgs),
    /// Grid search over learning rate and positive-class weight
    Tune(TuneArgs),
    /// Predict boundaries for one audio file with a trained checkpoint
    Predict(PredictArgs),
    /// Evaluate a checkpoint over a manifest split
    Evaluate(EvaluateArgs),
    /// Classical novelty baseline (self-similarity + checkerboard kernel)
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct FeatureArgs {
    /// STFT window size in samples
    #[arg(long, default_value_t = 2048)]
    window: usize,
    /// Hop size in samples
    #[arg(long, default_value_t = 512)]
    hop: usize,
    /// Number of MFCC rows
    #[arg(long, default_value_t = 13)]
    n_mfcc: usize,
    /// Number of constant-Q bins
    #[arg(long, default_value_t = 84)]
    n_cqt_bins: usize,
}

impl FeatureArgs {
    fn to_config(&self) -> FeatureConfig {
        FeatureConfig {
            window: self.window,
            hop: self.hop,
            n_mfcc: self.n_mfcc,
            n_cqt_bins: self.n_cqt_bins,
            ..FeatureConfig::default()
        }
    }
}

#[derive(Args)]
struct ExtractArgs {
    /// Input WAV file
    #[arg(long)]
    audio: PathBuf,
    /// Output feature file
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum TextFormat {
    Savgm,
    TwoColumn,
}

#[derive(Args)]
struct ConvertArgs {
    /// Input annotation file
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Format of the input file
    #[arg(long, value_enum)]
    from: TextFormat,
    /// Format to write
    #[arg(long, value_enum)]
    to: TextFormat,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Manifest to read annotations from
    #[arg(long)]
    manifest: PathBuf,
    /// Restrict to one split
    #[arg(long)]
    split: Option<Split>,
    /// Output JSON file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of tracks to generate
    #[arg(long, default_value_t = 10)]
    tracks: usize,
    /// Output directory (manifest.jsonl is written/extended here)
    #[arg(long)]
    out: PathBuf,
    /// Split recorded in the manifest for these tracks
    #[arg(long, default_value = "train")]
    split: Split,
    /// File-name prefix, also keeps reruns from colliding
    #[arg(long, default_value = "track")]
    prefix: String,
    /// Append to an existing manifest instead of overwriting
    #[arg(long, default_value_t = false)]
    append: bool,
}

#[derive(Args)]
struct ArchArgs {
    /// Architecture preset: the full-size model or a desk-scale one
    #[arg(long, default_value = "full")]
    arch: ArchPreset,
    /// Enable the max-pooling ablation (halves the time axis)
    #[arg(long, default_value_t = false)]
    max_pool: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchPreset {
    Full,
    Reduced,
}

impl ArchArgs {
    fn to_config(&self) -> ArchitectureConfig {
        let mut arch = match self.arch {
            ArchPreset::Full => ArchitectureConfig::default(),
            ArchPreset::Reduced => ArchitectureConfig::reduced(),
        };
        arch.max_pool = self.max_pool;
        arch
    }
}

#[derive(Args)]
struct TrainCommonArgs {
    /// Training epochs
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    /// Adam learning rate
    #[arg(long, default_value_t = 0.01)]
    lr: f32,
    /// Positive-class weight in the loss
    #[arg(long, default_value_t = 100.0)]
    pos_weight: f32,
    /// Frames per training chunk
    #[arg(long, default_value_t = 2048)]
    chunk_frames: usize,
    /// Overlap between consecutive chunks
    #[arg(long, default_value_t = 256)]
    chunk_overlap: usize,
    /// Half-width of target widening (frames)
    #[arg(long, default_value_t = 0)]
    smear: usize,
    /// Augmented copies per training track
    #[arg(long, default_value_t = 0)]
    augment_copies: usize,
    /// Slowest tempo-stretch rate
    #[arg(long, default_value_t = 0.8)]
    tempo_min: f64,
    /// Fastest tempo-stretch rate
    #[arg(long, default_value_t = 1.2)]
    tempo_max: f64,
    /// Pitch transposition bound in semitones
    #[arg(long, default_value_t = 2.0)]
    pitch_max: f64,
    /// Tolerance (seconds) for per-epoch validation metrics
    #[arg(long, default_value_t = 3.0)]
    val_tolerance: f64,
}

impl TrainCommonArgs {
    fn to_config(&self, seed: u64) -> TrainingConfig {
        TrainingConfig {
            epochs: self.epochs,
            lr: self.lr,
            pos_weight: self.pos_weight,
            chunk_frames: self.chunk_frames,
            chunk_overlap: self.chunk_overlap,
            seed,
            target_smear: self.smear,
            val_tolerance_secs: self.val_tolerance,
            augment: AugmentConfig {
                tempo_range: (self.tempo_min, self.tempo_max),
                pitch_semitones: (-self.pitch_max, self.pitch_max),
                copies_per_track: self.augment_copies,
            },
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest (JSON Lines)
    #[arg(long)]
    manifest: PathBuf,
    /// Where to write the final checkpoint
    #[arg(long)]
    out: PathBuf,
    /// Start from this checkpoint instead of fresh weights
    #[arg(long)]
    init_checkpoint: Option<PathBuf>,
    /// Write per-epoch metrics CSV here
    #[arg(long)]
    metrics_log: Option<PathBuf>,
    #[command(flatten)]
    arch: ArchArgs,
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    common: TrainCommonArgs,
}

#[derive(Args)]
struct TuneArgs {
    /// Dataset manifest (JSON Lines); needs train and val splits
    #[arg(long)]
    manifest: PathBuf,
    /// Grid as JSON, e.g. '{"lr":[0.01,0.005],"pos_weight":[10,100]}'
    #[arg(long)]
    grid: String,
    /// Epochs per grid combination
    #[arg(long, default_value_t = 10)]
    grid_epochs: usize,
    /// Output results file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    arch: ArchArgs,
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    common: TrainCommonArgs,
}

#[derive(Args)]
struct PeakArgs {
    /// Local-maximum window half-width in frames
    #[arg(long, default_value_t = 64)]
    half_width: usize,
    /// Probability threshold for keeping a peak
    #[arg(long, default_value_t = 0.5)]
    threshold: f32,
}

impl PeakArgs {
    fn to_params(&self) -> PeakParams {
        PeakParams { half_width: self.half_width, threshold: self.threshold }
    }
}

#[derive(Args)]
struct PredictArgs {
    /// Input WAV file
    #[arg(long)]
    audio: PathBuf,
    /// Trained checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output predictions (time<TAB>probability); stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also dump the raw logit curve in the feature-file format
    #[arg(long)]
    logits: Option<PathBuf>,
    #[command(flatten)]
    peak: PeakArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset manifest (JSON Lines)
    #[arg(long)]
    manifest: PathBuf,
    /// Split to evaluate
    #[arg(long, default_value = "test")]
    split: Split,
    /// Trained checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Matching tolerance in seconds
    #[arg(long, default_value_t = 3.0)]
    tolerance: f64,
    /// Output report JSON (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    peak: PeakArgs,
}

#[derive(Args)]
struct BaselineArgs {
    /// Input WAV file
    #[arg(long)]
    audio: PathBuf,
    /// Checkerboard kernel half-width in frames
    #[arg(long, default_value_t = DEFAULT_KERNEL_HALF_WIDTH)]
    kernel_half_width: usize,
    /// Local-maximum window half-width in frames
    #[arg(long, default_value_t = 64)]
    half_width: usize,
    /// Probability threshold for keeping a peak
    #[arg(long, default_value_t = DEFAULT_BASELINE_THRESHOLD)]
    threshold: f32,
    /// Output predictions (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    features: FeatureArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are successful exits; anything else is usage
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(RunError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

enum RunError {
    Usage(String),
    Runtime(Box<dyn std::error::Error>),
}

impl<E: std::error::Error + 'static> From<E> for RunError {
    fn from(e: E) -> Self {
        RunError::Runtime(Box::new(e))
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    let verbose = cli.verbose;
    let log = |msg: String| {
        if verbose {
            eprintln!("{msg}");
        }
    };
    match cli.command {
        Command::Extract(args) => {
            let fcfg = args.features.to_config();
            let clip = gamseg::audio_io::decode_audio(&args.audio)?;
            let clip = gamseg::audio_io::resample(&clip, gamseg::audio_io::TARGET_SAMPLE_RATE);
            let fm = extract_features(&clip, &fcfg)?;
            write_feature_file(&fm, &args.out)?;
            log(format!(
                "wrote {}x{} features to {}",
                fm.data.rows,
                fm.data.cols,
                args.out.display()
            ));
        }
        Command::AnnotateConvert(args) => {
            let track = match args.from {
                TextFormat::Savgm => parse_annotation_file(&args.input)?,
                TextFormat::TwoColumn => parse_two_column_file(&args.input)?,
            };
            let text = match args.to {
                TextFormat::Savgm => serialize_annotation(&track),
                TextFormat::TwoColumn => serialize_two_column(&track),
            };
            write_or_print(args.out.as_deref(), &text)?;
        }
        Command::Stats(args) => {
            let manifest = DatasetManifest::load(&args.manifest)?;
            let entries: Vec<_> = match args.split {
                Some(split) => manifest.split(split),
                None => manifest.entries.iter().collect(),
            };
            if entries.is_empty() {
                return Err(RunError::Usage("no manifest entries in the chosen split".into()));
            }
            let mut tracks = Vec::new();
            for entry in entries {
                tracks.push(entry.load_annotation()?);
            }
            let stats = corpus_stats(&tracks);
            let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
            write_or_print(args.out.as_deref(), &format!("{json}\n"))?;
        }
        Command::Synth(args) => {
            let generated = generate_corpus(&args.out, args.tracks, cli.seed, &args.prefix)?;
            let entries = manifest_from_generated(&generated, args.split);
            let manifest_path = gamseg::training::manifest_path(&args.out);
            let mut manifest = if args.append && manifest_path.exists() {
                DatasetManifest::load(&manifest_path)?
            } else {
                DatasetManifest::default()
            };
            manifest.entries.extend(entries);
            manifest.save(&manifest_path)?;
            log(format!(
                "generated {} tracks into {} (manifest {})",
                args.tracks,
                args.out.display(),
                manifest_path.display()
            ));
        }
        Command::Train(args) => {
            let manifest = DatasetManifest::load(&args.manifest)?;
            let arch = args.arch.to_config();
            let fcfg = args.features.to_config();
            let cfg = args.common.to_config(cli.seed);
            let init = match &args.init_checkpoint {
                Some(path) => Init::FromCheckpoint(Box::new(load_checkpoint(path)?)),
                None => Init::Fresh,
            };
            let mut outcome = train(&manifest, &arch, &fcfg, &cfg, init)?;
            if verbose {
                for m in &outcome.metrics {
                    eprintln!(
                        "epoch {}: loss {:.4}{}",
                        m.epoch,
                        m.train_loss,
                        m.val_f1.map(|f| format!(" val_f1 {f:.3}")).unwrap_or_default()
                    );
                }
            }
            save_checkpoint(&outcome.final_checkpoint(), &args.out)?;
            if let Some(best) = outcome.best_checkpoint() {
                let best_path = args.out.with_extension("best.ckpt");
                save_checkpoint(&best, &best_path)?;
                log(format!("best-val checkpoint at {}", best_path.display()));
            }
            if let Some(path) = &args.metrics_log {
                std::fs::write(path, metrics_to_csv(&outcome.metrics))?;
            }
            log(format!("final checkpoint at {}", args.out.display()));
        }
        Command::Tune(args) => {
            let grid: BTreeMap<String, Vec<f64>> = serde_json::from_str(&args.grid)
                .map_err(|e| RunError::Usage(format!("bad --grid JSON: {e}")))?;
            let manifest = DatasetManifest::load(&args.manifest)?;
            let arch = args.arch.to_config();
            let fcfg = args.features.to_config();
            let cfg = args.common.to_config(cli.seed);
            let rows = grid_search(&manifest, &arch, &fcfg, &cfg, &grid, args.grid_epochs)?;
            let mut text = String::from("lr,pos_weight,val_precision,val_recall,val_f1\n");
            for r in &rows {
                text.push_str(&format!(
                    "{},{},{:.6},{:.6},{:.6}\n",
                    r.lr, r.pos_weight, r.val_precision, r.val_recall, r.val_f1
                ));
            }
            write_or_print(args.out.as_deref(), &text)?;
        }
        Command::Predict(args) => {
            let ckpt = load_checkpoint(&args.checkpoint)?;
            let fcfg = ckpt.header.feature_config.clone();
            let chunks = chunk_params_from_header(&ckpt.header);
            let model = ckpt.into_model()?;
            let (pred, logits) =
                predict_boundaries(&args.audio, &model, &fcfg, args.peak.to_params(), chunks)?;
            if let Some(path) = &args.logits {
                let fm = FeatureMatrix {
                    data: Matrix { rows: 1, cols: logits.len(), data: logits },
                    frame_rate: fcfg.frame_rate(),
                    names: vec![("logits".into(), 1)],
                };
                write_feature_file(&fm, path)?;
            }
            write_or_print(args.out.as_deref(), &serialize_prediction(&pred))?;
        }
        Command::Evaluate(args) => {
            let manifest = DatasetManifest::load(&args.manifest)?;
            if manifest.split(args.split).is_empty() {
                return Err(RunError::Usage(format!("split `{}` is empty", args.split)));
            }
            let ckpt = load_checkpoint(&args.checkpoint)?;
            let fcfg = ckpt.header.feature_config.clone();
            let chunks = chunk_params_from_header(&ckpt.header);
            let model = ckpt.into_model()?;
            let report = evaluate_corpus(
                &manifest,
                args.split,
                &model,
                &fcfg,
                args.tolerance,
                args.peak.to_params(),
                chunks,
            )?;
            for t in &report.tracks {
                log(format!(
                    "{}: P {:.3} R {:.3} F1 {:.3}",
                    t.audio_path, t.metrics.precision, t.metrics.recall, t.metrics.f1
                ));
            }
            eprintln!("{}", report.summary_line());
            let json = serde_json::to_string_pretty(&report).expect("report serialize");
            write_or_print(args.out.as_deref(), &format!("{json}\n"))?;
        }
        Command::Baseline(args) => {
            let fcfg = args.features.to_config();
            let (pred, _novelty) = baseline_segment(
                &args.audio,
                &fcfg,
                args.kernel_half_width,
                args.half_width,
                args.threshold,
            )?;
            write_or_print(args.out.as_deref(), &serialize_prediction(&pred))?;
        }
    }
    Ok(())
}

/// Prediction windows default to the checkpoint's training chunk layout so
/// padding at inference matches what the model saw in training.
fn chunk_params_from_header(header: &gamseg::neuralnet::CheckpointHeader) -> ChunkParams {
    let mut chunks = ChunkParams::default();
    if let Some(tc) = &header.training_config {
        if let Some(frames) = tc.get("chunk_frames").and_then(|v| v.as_u64()) {
            chunks.frames = frames as usize;
        }
        if let Some(overlap) = tc.get("chunk_overlap").and_then(|v| v.as_u64()) {
            chunks.overlap = overlap as usize;
        }
    }
    chunks
}
