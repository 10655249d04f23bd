//! Dataset manifests, chunking, the train loop (weighted BCE + Adam), and
//! grid search. Pretrain/fine-tune is two invocations of [`train`], the
//! second starting from a checkpoint.

pub mod augment;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::{
    boundaries_to_frame_targets, parse_annotation_file, parse_two_column_file, AnnotationTrack,
};
use crate::audio_io::{decode_audio, resample, AudioClip, TARGET_SAMPLE_RATE};
use crate::eval::{evaluate_track, peak_pick, predict_logits_stitched, MeanStd, PeakParams};
use crate::features::{extract_features, FeatureConfig, FeatureMatrix, Matrix};
use crate::neuralnet::{
    weighted_bce_loss_and_grad, Adam, AdamConfig, ArchitectureConfig, Checkpoint,
    CheckpointHeader, Model,
};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (train|val|test)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationFormat {
    Savgm,
    TwoColumn,
}

/// One corpus entry: an audio file with its annotation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub audio_path: String,
    pub annotation_path: String,
    pub annotation_format: AnnotationFormat,
    pub split: Split,
}

impl ManifestEntry {
    pub fn load_annotation(&self) -> TrainResult<AnnotationTrack> {
        let path = Path::new(&self.annotation_path);
        let track = match self.annotation_format {
            AnnotationFormat::Savgm => parse_annotation_file(path),
            AnnotationFormat::TwoColumn => parse_two_column_file(path),
        };
        track.map_err(|e| TrainError::FeatureExtractionFailed {
            path: self.annotation_path.clone(),
            reason: e.to_string(),
        })
    }
}

/// JSON-Lines dataset manifest.
#[derive(Debug, Clone, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> TrainResult<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| {
                TrainError::InvalidConfig(format!("manifest line {}: {e}", i + 1))
            })?;
            entries.push(entry);
        }
        let manifest = DatasetManifest { entries };
        manifest.check_paths()?;
        Ok(manifest)
    }

    fn check_paths(&self) -> TrainResult<()> {
        for e in &self.entries {
            for p in [&e.audio_path, &e.annotation_path] {
                if !Path::new(p).exists() {
                    return Err(TrainError::InvalidConfig(format!(
                        "manifest references missing file {p}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> TrainResult<()> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("manifest entry serialization"));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub tempo_range: (f64, f64),
    pub pitch_semitones: (f64, f64),
    pub copies_per_track: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            tempo_range: (0.8, 1.2),
            pitch_semitones: (-2.0, 2.0),
            copies_per_track: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub lr: f32,
    pub pos_weight: f32,
    pub chunk_frames: usize,
    pub chunk_overlap: usize,
    pub seed: u64,
    /// Half-width (frames) of target widening around each boundary frame.
    pub target_smear: usize,
    /// Tolerance used for the per-epoch validation F1.
    pub val_tolerance_secs: f64,
    pub augment: AugmentConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 60,
            lr: 0.01,
            pos_weight: 100.0,
            chunk_frames: 2048,
            chunk_overlap: 256,
            seed: 0,
            target_smear: 0,
            val_tolerance_secs: 3.0,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> TrainResult<()> {
        let bad = |why: String| Err(TrainError::InvalidConfig(why));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.chunk_overlap >= self.chunk_frames {
            return bad(format!(
                "chunk_overlap {} must be below chunk_frames {}",
                self.chunk_overlap, self.chunk_frames
            ));
        }
        let (lo, hi) = self.augment.tempo_range;
        if !(lo > 0.0 && hi >= lo) {
            return bad(format!("tempo range [{lo}, {hi}] invalid"));
        }
        let (plo, phi) = self.augment.pitch_semitones;
        if plo.abs() > 12.0 || phi.abs() > 12.0 || plo > phi {
            return bad(format!("pitch range [{plo}, {phi}] invalid"));
        }
        Ok(())
    }
}

pub type TrainResult<T> = Result<T, TrainError>;

#[derive(Debug)]
pub enum TrainError {
    EmptyManifest,
    FeatureExtractionFailed { path: String, reason: String },
    RateOutOfRange(String),
    GridTooLarge(usize),
    UnknownHyperparameter(String),
    CheckpointMismatch(String),
    InvalidConfig(String),
    Io(std::io::Error),
    Net(crate::neuralnet::NetError),
    Eval(Box<crate::eval::EvalError>),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::EmptyManifest => write!(f, "manifest has no usable entries"),
            TrainError::FeatureExtractionFailed { path, reason } => {
                write!(f, "feature extraction failed for {path}: {reason}")
            }
            TrainError::RateOutOfRange(why) => write!(f, "augmentation rate out of range: {why}"),
            TrainError::GridTooLarge(n) => write!(f, "grid of {n} combinations not runnable"),
            TrainError::UnknownHyperparameter(k) => write!(f, "unknown hyperparameter `{k}`"),
            TrainError::CheckpointMismatch(why) => write!(f, "checkpoint mismatch: {why}"),
            TrainError::InvalidConfig(why) => write!(f, "invalid training config: {why}"),
            TrainError::Io(e) => write!(f, "training i/o: {e}"),
            TrainError::Net(e) => write!(f, "{e}"),
            TrainError::Eval(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for TrainError {}

impl From<std::io::Error> for TrainError {
    fn from(e: std::io::Error) -> Self {
        TrainError::Io(e)
    }
}

impl From<crate::neuralnet::NetError> for TrainError {
    fn from(e: crate::neuralnet::NetError) -> Self {
        TrainError::Net(e)
    }
}

impl From<crate::eval::EvalError> for TrainError {
    fn from(e: crate::eval::EvalError) -> Self {
        TrainError::Eval(Box::new(e))
    }
}

/// A fixed-length training window: features padded to `chunk_frames` columns,
/// padded frames masked out of the loss.
#[derive(Debug, Clone)]
pub struct TrainingChunk {
    pub features: FeatureMatrix,
    pub targets: Vec<f32>,
    pub mask: Vec<bool>,
}

/// Cut one track into overlapping fixed-length windows. Window starts advance
/// by `chunk_frames - chunk_overlap`; the final window is right-padded with
/// zeros and those frames are masked.
pub fn make_training_chunks(
    fm: &FeatureMatrix,
    targets: &[f32],
    chunk_frames: usize,
    chunk_overlap: usize,
) -> Vec<TrainingChunk> {
    assert_eq!(fm.data.cols, targets.len(), "targets must cover every frame");
    assert!(chunk_overlap < chunk_frames);
    let t_total = fm.data.cols;
    let stride = chunk_frames - chunk_overlap;
    let rows = fm.data.rows;

    let mut chunks = Vec::new();
    let mut start = 0usize;
    loop {
        let mut data = vec![0.0f32; rows * chunk_frames];
        let real = (t_total - start).min(chunk_frames);
        for r in 0..rows {
            let src = fm.data.row(r);
            data[r * chunk_frames..r * chunk_frames + real]
                .copy_from_slice(&src[start..start + real]);
        }
        let mut chunk_targets = vec![0.0f32; chunk_frames];
        chunk_targets[..real].copy_from_slice(&targets[start..start + real]);
        let mut mask = vec![false; chunk_frames];
        mask[..real].fill(true);
        chunks.push(TrainingChunk {
            features: FeatureMatrix {
                data: Matrix { rows, cols: chunk_frames, data },
                frame_rate: fm.frame_rate,
                names: fm.names.clone(),
            },
            targets: chunk_targets,
            mask,
        });
        if start + chunk_frames >= t_total {
            break;
        }
        start += stride;
    }
    chunks
}

/// One loaded track, ready for chunking or validation.
pub struct PreparedTrack {
    pub audio_path: String,
    pub features: FeatureMatrix,
    pub boundary_times: Vec<f64>,
    pub targets: Vec<f32>,
}

fn prepare_clip(
    entry: &ManifestEntry,
    clip: &AudioClip,
    track: &AnnotationTrack,
    fcfg: &FeatureConfig,
    smear: usize,
) -> TrainResult<PreparedTrack> {
    let features = extract_features(clip, fcfg).map_err(|e| {
        TrainError::FeatureExtractionFailed {
            path: entry.audio_path.clone(),
            reason: e.to_string(),
        }
    })?;
    let targets =
        boundaries_to_frame_targets(track, features.frame_rate, features.data.cols, smear);
    Ok(PreparedTrack {
        audio_path: entry.audio_path.clone(),
        features,
        boundary_times: track.interior_times(),
        targets: targets.values,
    })
}

fn load_entry(entry: &ManifestEntry) -> TrainResult<(AudioClip, AnnotationTrack)> {
    let clip = decode_audio(Path::new(&entry.audio_path)).map_err(|e| {
        TrainError::FeatureExtractionFailed {
            path: entry.audio_path.clone(),
            reason: e.to_string(),
        }
    })?;
    let clip = resample(&clip, TARGET_SAMPLE_RATE);
    let track = entry.load_annotation()?;
    Ok((clip, track))
}

/// Load and feature-extract a split. For the train split, `augment` adds
/// `copies_per_track` randomized tempo/pitch copies per entry; augmented
/// copies never reach other splits by construction.
pub fn prepare_split(
    manifest: &DatasetManifest,
    split: Split,
    fcfg: &FeatureConfig,
    cfg: &TrainingConfig,
    augmented: bool,
) -> TrainResult<Vec<PreparedTrack>> {
    let entries = manifest.split(split);
    let copies = if augmented { cfg.augment.copies_per_track } else { 0 };

    // pre-draw augmentation parameters so parallel order cannot shift them
    let mut plans: Vec<(usize, Option<(f64, f64)>)> = Vec::new();
    let mut rng = Rng::new(cfg.seed ^ 0xA46_5EED);
    for (i, _) in entries.iter().enumerate() {
        plans.push((i, None));
        for _ in 0..copies {
            let (lo, hi) = cfg.augment.tempo_range;
            let tempo = lo + (hi - lo) * rng.next_f64();
            let (plo, phi) = cfg.augment.pitch_semitones;
            let pitch = plo + (phi - plo) * rng.next_f64();
            plans.push((i, Some((tempo, pitch))));
        }
    }

    let results: Vec<TrainResult<PreparedTrack>> = plans
        .par_iter()
        .map(|(idx, plan)| {
            let entry = entries[*idx];
            let (clip, track) = load_entry(entry)?;
            match plan {
                None => prepare_clip(entry, &clip, &track, fcfg, cfg.target_smear),
                Some((tempo, pitch)) => {
                    let (aclip, atrack) =
                        augment::augment_track(&clip, &track, *tempo, *pitch, &cfg.augment)?;
                    prepare_clip(entry, &aclip, &atrack, fcfg, cfg.target_smear)
                }
            }
        })
        .collect();
    results.into_iter().collect()
}

/// Per-epoch log entry.
#[derive(Debug, Clone, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_precision: Option<f64>,
    pub val_recall: Option<f64>,
    pub val_f1: Option<f64>,
}

/// CSV log: epoch, train_loss, val_precision, val_recall, val_f1.
pub fn metrics_to_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,val_precision,val_recall,val_f1\n");
    let field = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for m in metrics {
        out.push_str(&format!(
            "{},{:.6},{},{},{}\n",
            m.epoch,
            m.train_loss,
            field(m.val_precision),
            field(m.val_recall),
            field(m.val_f1),
        ));
    }
    out
}

pub enum Init {
    Fresh,
    FromCheckpoint(Box<Checkpoint>),
}

pub struct TrainOutcome {
    pub model: Model<f32>,
    /// Deep copy of the weights from the epoch with the best validation F1
    /// (first epoch wins ties); present only when a val split exists.
    pub best: Option<(usize, Model<f32>)>,
    pub metrics: Vec<EpochMetrics>,
    pub header: CheckpointHeader,
}

impl TrainOutcome {
    pub fn final_checkpoint(&mut self) -> Checkpoint {
        let header = self.header.clone();
        Checkpoint::from_model(&mut self.model, header)
    }

    pub fn best_checkpoint(&mut self) -> Option<Checkpoint> {
        let header = self.header.clone();
        self.best.as_mut().map(|(_, m)| Checkpoint::from_model(m, header))
    }
}

/// Match targets and mask to the model's output length. The max-pool
/// ablation halves the time axis, so each output frame takes the max target
/// over its source pair and counts as real if either source frame was.
fn align_targets(chunk: &TrainingChunk, out_len: usize) -> (Vec<f32>, Vec<bool>) {
    let t_in = chunk.targets.len();
    if out_len == t_in {
        return (chunk.targets.clone(), chunk.mask.clone());
    }
    let mut targets = Vec::with_capacity(out_len);
    let mut mask = Vec::with_capacity(out_len);
    for j in 0..out_len {
        let a = 2 * j;
        let b = (2 * j + 1).min(t_in - 1);
        targets.push(chunk.targets[a].max(chunk.targets[b]));
        mask.push(chunk.mask[a] || chunk.mask[b]);
    }
    (targets, mask)
}

/// Mean validation metrics at the configured tolerance. Windows match the
/// training chunk layout.
fn validate(
    model: &Model<f32>,
    val: &[PreparedTrack],
    peak: PeakParams,
    tolerance: f64,
    chunk_frames: usize,
    chunk_overlap: usize,
) -> TrainResult<(f64, f64, f64)> {
    let metrics: Vec<TrainResult<(f64, f64, f64)>> = val
        .par_iter()
        .map(|track| {
            let logits =
                predict_logits_stitched(model, &track.features, chunk_frames, chunk_overlap)?;
            let out_rate = track.features.frame_rate * logits.len() as f64
                / track.features.data.cols as f64;
            let pred = peak_pick(&logits, out_rate, peak.half_width, peak.threshold);
            let m = evaluate_track(&pred.times, &track.boundary_times, tolerance)?;
            Ok((m.precision, m.recall, m.f1))
        })
        .collect();
    let mut p = Vec::new();
    let mut r = Vec::new();
    let mut f = Vec::new();
    for m in metrics {
        let (pi, ri, fi) = m?;
        p.push(pi);
        r.push(ri);
        f.push(fi);
    }
    Ok((MeanStd::of(&p).mean, MeanStd::of(&r).mean, MeanStd::of(&f).mean))
}

/// Train on the manifest's train split; log val metrics per epoch when a val
/// split exists. Deterministic for a fixed seed: initialization, shuffling,
/// dropout, and augmentation draws all derive from `cfg.seed`.
pub fn train(
    manifest: &DatasetManifest,
    arch: &ArchitectureConfig,
    fcfg: &FeatureConfig,
    cfg: &TrainingConfig,
    init: Init,
) -> TrainResult<TrainOutcome> {
    cfg.validate()?;
    fcfg.validate().map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    if fcfg.total_rows() != arch.input_features {
        return Err(TrainError::InvalidConfig(format!(
            "feature config yields {} rows, architecture wants {}",
            fcfg.total_rows(),
            arch.input_features
        )));
    }

    let train_tracks = prepare_split(manifest, Split::Train, fcfg, cfg, true)?;
    if train_tracks.is_empty() {
        return Err(TrainError::EmptyManifest);
    }
    let val_tracks = prepare_split(manifest, Split::Val, fcfg, cfg, false)?;

    let mut model = match init {
        Init::Fresh => Model::<f32>::init(arch, cfg.seed),
        Init::FromCheckpoint(ckpt) => {
            if ckpt.header.feature_config.total_rows() != arch.input_features {
                return Err(TrainError::CheckpointMismatch(format!(
                    "checkpoint feature config yields {} rows, architecture wants {}",
                    ckpt.header.feature_config.total_rows(),
                    arch.input_features
                )));
            }
            if ckpt.header.architecture != *arch {
                return Err(TrainError::CheckpointMismatch(
                    "checkpoint architecture differs from the requested one".into(),
                ));
            }
            ckpt.into_model()?
        }
    };

    let mut chunks: Vec<TrainingChunk> = Vec::new();
    for track in &train_tracks {
        chunks.extend(make_training_chunks(
            &track.features,
            &track.targets,
            cfg.chunk_frames,
            cfg.chunk_overlap,
        ));
    }

    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, &mut model);
    let mut shuffle_rng = Rng::new(cfg.seed ^ 0x5_4FF1E);
    let mut dropout_rng = Rng::new(cfg.seed ^ 0xD20_0071);
    let peak = PeakParams::default();

    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Model<f32>)> = None;
    let mut order: Vec<usize> = (0..chunks.len()).collect();

    for epoch in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0f64;
        for &ci in &order {
            let chunk = &chunks[ci];
            let (logits, cache) = model.forward_train(&chunk.features, &mut dropout_rng)?;
            let (targets, mask) = align_targets(chunk, logits.len());
            let (loss, dlogits) =
                weighted_bce_loss_and_grad(&logits, &targets, Some(&mask), cfg.pos_weight)?;
            model.zero_grad();
            model.backward(cache, &dlogits);
            adam.step(&mut model);
            loss_sum += loss as f64;
        }
        let train_loss = loss_sum / order.len() as f64;

        let val = if val_tracks.is_empty() {
            None
        } else {
            Some(validate(
                &model,
                &val_tracks,
                peak,
                cfg.val_tolerance_secs,
                cfg.chunk_frames,
                cfg.chunk_overlap,
            )?)
        };
        if let Some((_, _, f1)) = val {
            let better = best.as_ref().map(|(_, bf, _)| f1 > *bf).unwrap_or(true);
            if better {
                best = Some((epoch, f1, model.clone()));
            }
        }
        metrics.push(EpochMetrics {
            epoch,
            train_loss,
            val_precision: val.map(|v| v.0),
            val_recall: val.map(|v| v.1),
            val_f1: val.map(|v| v.2),
        });
    }

    let header = CheckpointHeader {
        architecture: arch.clone(),
        feature_config: fcfg.clone(),
        training_config: Some(serde_json::to_value(cfg).expect("config serializes")),
        seed: cfg.seed,
    };
    Ok(TrainOutcome {
        model,
        best: best.map(|(epoch, _, m)| (epoch, m)),
        metrics,
        header,
    })
}

/// One grid-search row.
#[derive(Debug, Clone, Serialize)]
pub struct GridResult {
    pub lr: f32,
    pub pos_weight: f32,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
}

pub const GRID_CAP: usize = 64;

/// Cartesian sweep over `lr` and `pos_weight`, each combination trained with
/// `grid_epochs` and scored on the val split. Rows are ranked by val F1,
/// ties broken by (lr asc, pos_weight asc).
pub fn grid_search(
    manifest: &DatasetManifest,
    arch: &ArchitectureConfig,
    fcfg: &FeatureConfig,
    base: &TrainingConfig,
    grid: &BTreeMap<String, Vec<f64>>,
    grid_epochs: usize,
) -> TrainResult<Vec<GridResult>> {
    for key in grid.keys() {
        if key != "lr" && key != "pos_weight" {
            return Err(TrainError::UnknownHyperparameter(key.clone()));
        }
    }
    let lrs: Vec<f64> = grid.get("lr").cloned().unwrap_or_else(|| vec![base.lr as f64]);
    let pos_weights: Vec<f64> =
        grid.get("pos_weight").cloned().unwrap_or_else(|| vec![base.pos_weight as f64]);
    let size = lrs.len() * pos_weights.len();
    if size == 0 || size > GRID_CAP {
        return Err(TrainError::GridTooLarge(size));
    }
    if manifest.split(Split::Val).is_empty() {
        return Err(TrainError::EmptyManifest);
    }

    let mut rows = Vec::with_capacity(size);
    for &lr in &lrs {
        for &pw in &pos_weights {
            let mut cfg = base.clone();
            cfg.lr = lr as f32;
            cfg.pos_weight = pw as f32;
            cfg.epochs = grid_epochs;
            let outcome = train(manifest, arch, fcfg, &cfg, Init::Fresh)?;
            let last = outcome.metrics.last().expect("at least one epoch");
            rows.push(GridResult {
                lr: lr as f32,
                pos_weight: pw as f32,
                val_precision: last.val_precision.unwrap_or(0.0),
                val_recall: last.val_recall.unwrap_or(0.0),
                val_f1: last.val_f1.unwrap_or(0.0),
            });
        }
    }
    rows.sort_by(|a, b| {
        b.val_f1
            .partial_cmp(&a.val_f1)
            .unwrap()
            .then(a.lr.partial_cmp(&b.lr).unwrap())
            .then(a.pos_weight.partial_cmp(&b.pos_weight).unwrap())
    });
    Ok(rows)
}

/// Write a manifest entry list for a generated corpus.
pub fn manifest_from_generated(
    tracks: &[crate::synth::GeneratedTrack],
    split: Split,
) -> Vec<ManifestEntry> {
    tracks
        .iter()
        .map(|t| ManifestEntry {
            audio_path: t.audio_path.clone(),
            annotation_path: t.annotation_path.clone(),
            annotation_format: AnnotationFormat::Savgm,
            split,
        })
        .collect()
}

/// Convenience: manifest path inside a corpus directory.
pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.jsonl")
}
