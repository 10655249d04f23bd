//! Post-processing and evaluation: local-maximum peak picking over the logit
//! curve, tolerance-based one-to-one boundary matching (maximum bipartite
//! matching, not greedy), per-track precision/recall/F1, and corpus reports.

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::annotations::AnnotationTrack;
use crate::audio_io::{decode_audio, resample, TARGET_SAMPLE_RATE};
use crate::features::{extract_features, FeatureConfig, FeatureMatrix};
use crate::neuralnet::{sigmoid, Model, NetError};

pub const DEFAULT_TOLERANCE_SECS: f64 = 3.0;
pub const DEFAULT_PEAK_HALF_WIDTH: usize = 64;
pub const DEFAULT_PEAK_THRESHOLD: f32 = 0.5;
/// Frames per forward pass at prediction time, and the overlap trimmed away
/// when stitching chunked logits back together.
pub const PREDICT_CHUNK_FRAMES: usize = 2048;
pub const PREDICT_CHUNK_OVERLAP: usize = 256;

/// Kept peaks of the (sigmoid) logit curve, in seconds.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryPrediction {
    pub times: Vec<f64>,
    pub probabilities: Vec<f32>,
}

pub type EvalResult<T> = Result<T, EvalError>;

#[derive(Debug)]
pub enum EvalError {
    UnsortedInput,
    EmptyManifest,
    Audio(crate::audio_io::AudioError),
    Feature(crate::features::FeatureError),
    Annotation(crate::annotations::AnnotationError),
    Net(NetError),
    Io(std::io::Error),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::UnsortedInput => write!(f, "boundary lists must be sorted ascending"),
            EvalError::EmptyManifest => write!(f, "no tracks to evaluate"),
            EvalError::Audio(e) => write!(f, "{e}"),
            EvalError::Feature(e) => write!(f, "{e}"),
            EvalError::Annotation(e) => write!(f, "{e}"),
            EvalError::Net(e) => write!(f, "{e}"),
            EvalError::Io(e) => write!(f, "report i/o: {e}"),
        }
    }
}

impl std::error::Error for EvalError {}

macro_rules! from_err {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for EvalError {
            fn from(e: $ty) -> Self {
                EvalError::$variant(e)
            }
        }
    };
}
from_err!(Audio, crate::audio_io::AudioError);
from_err!(Feature, crate::features::FeatureError);
from_err!(Annotation, crate::annotations::AnnotationError);
from_err!(Net, NetError);
from_err!(Io, std::io::Error);

/// Keep frame `i` when sigmoid(logit) clears the threshold and the logit is a
/// strict local maximum over the window `[i-hw, i+hw]` (plateaus resolve to
/// their earliest frame).
pub fn peak_pick(
    logits: &[f32],
    frame_rate: f64,
    half_width: usize,
    threshold: f32,
) -> BoundaryPrediction {
    let mut times = Vec::new();
    let mut probabilities = Vec::new();
    for i in 0..logits.len() {
        let p = sigmoid(logits[i]);
        if p < threshold {
            continue;
        }
        let lo = i.saturating_sub(half_width);
        let hi = (i + half_width).min(logits.len().saturating_sub(1));
        // strictly above everything earlier in the window, at least as high
        // as everything later: equal neighbors keep only the first frame
        let earlier_ok = logits[lo..i].iter().all(|&v| v < logits[i]);
        let later_ok = logits[i + 1..=hi].iter().all(|&v| v <= logits[i]);
        if earlier_ok && later_ok {
            times.push(i as f64 / frame_rate);
            probabilities.push(p);
        }
    }
    BoundaryPrediction { times, probabilities }
}

fn check_sorted(xs: &[f64]) -> EvalResult<()> {
    if xs.windows(2).any(|w| w[1] < w[0]) {
        return Err(EvalError::UnsortedInput);
    }
    Ok(())
}

/// Maximum-cardinality one-to-one matching between predictions and references
/// under `|pred - ref| <= tolerance`, via Kuhn's augmenting paths. Returns
/// (ref_index, pred_index) pairs.
pub fn match_boundaries(
    pred: &[f64],
    reference: &[f64],
    tolerance: f64,
) -> EvalResult<Vec<(usize, usize)>> {
    check_sorted(pred)?;
    check_sorted(reference)?;
    let n_pred = pred.len();
    let n_ref = reference.len();
    let mut ref_match: Vec<Option<usize>> = vec![None; n_ref];

    fn try_augment(
        u: usize,
        pred: &[f64],
        reference: &[f64],
        tolerance: f64,
        visited: &mut [bool],
        ref_match: &mut [Option<usize>],
    ) -> bool {
        for r in 0..reference.len() {
            if visited[r] || (pred[u] - reference[r]).abs() > tolerance {
                continue;
            }
            visited[r] = true;
            if ref_match[r].is_none()
                || try_augment(ref_match[r].unwrap(), pred, reference, tolerance, visited, ref_match)
            {
                ref_match[r] = Some(u);
                return true;
            }
        }
        false
    }

    for u in 0..n_pred {
        let mut visited = vec![false; n_ref];
        try_augment(u, pred, reference, tolerance, &mut visited, &mut ref_match);
    }
    let mut pairs: Vec<(usize, usize)> = ref_match
        .iter()
        .enumerate()
        .filter_map(|(r, m)| m.map(|u| (r, u)))
        .collect();
    pairs.sort_unstable();
    Ok(pairs)
}

/// Per-track scores.
#[derive(Debug, Clone, Serialize)]
pub struct TrackMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_pred: usize,
    pub n_ref: usize,
    /// Matched (reference_time, predicted_time) pairs.
    pub matches: Vec<(f64, f64)>,
}

pub fn evaluate_track(
    pred: &[f64],
    reference: &[f64],
    tolerance: f64,
) -> EvalResult<TrackMetrics> {
    let pairs = match_boundaries(pred, reference, tolerance)?;
    let m = pairs.len() as f64;
    let precision = if pred.is_empty() { 0.0 } else { m / pred.len() as f64 };
    let recall = if reference.is_empty() { 0.0 } else { m / reference.len() as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(TrackMetrics {
        precision,
        recall,
        f1,
        n_pred: pred.len(),
        n_ref: reference.len(),
        matches: pairs.iter().map(|&(r, u)| (reference[r], pred[u])).collect(),
    })
}

/// Mean and population standard deviation, reported Table-style as
/// `0.512 (0.32)`.
#[derive(Debug, Clone, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ({:.2})", self.mean, self.std)
    }
}

/// Corpus-level report: one entry per track plus aggregate statistics
/// (unweighted mean, population std).
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub tolerance_secs: f64,
    pub tracks: Vec<NamedTrackMetrics>,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedTrackMetrics {
    pub audio_path: String,
    #[serde(flatten)]
    pub metrics: TrackMetrics,
}

impl EvalReport {
    pub fn from_tracks(tracks: Vec<NamedTrackMetrics>, tolerance_secs: f64) -> EvalResult<Self> {
        if tracks.is_empty() {
            return Err(EvalError::EmptyManifest);
        }
        let collect = |f: fn(&TrackMetrics) -> f64| -> Vec<f64> {
            tracks.iter().map(|t| f(&t.metrics)).collect()
        };
        Ok(EvalReport {
            tolerance_secs,
            precision: MeanStd::of(&collect(|m| m.precision)),
            recall: MeanStd::of(&collect(|m| m.recall)),
            f1: MeanStd::of(&collect(|m| m.f1)),
            tracks,
        })
    }

    pub fn summary_line(&self) -> String {
        format!(
            "P {} | R {} | F1 {} over {} tracks at {:.1} s tolerance",
            self.precision, self.recall, self.f1, self.tracks.len(), self.tolerance_secs
        )
    }
}

/// Eval-mode logits for a full track. Windows follow the training grid
/// exactly (fixed width, stride = chunk - overlap, final window zero-padded
/// on the right) so the model never sees an input layout it was not trained
/// on; each window contributes its non-overlapping center region.
pub fn predict_logits_stitched(
    model: &Model<f32>,
    fm: &FeatureMatrix,
    chunk_frames: usize,
    chunk_overlap: usize,
) -> EvalResult<Vec<f32>> {
    assert!(chunk_overlap < chunk_frames);
    let t_total = fm.data.cols;
    // pooled models halve the frame axis; keep window starts aligned
    let pool = if model.arch.max_pool { 2 } else { 1 };
    let mut stride = chunk_frames - chunk_overlap;
    stride -= stride % pool;
    assert!(stride > 0);

    let out_total = model.output_len(t_total);
    let mut logits = vec![0.0f32; out_total];
    let mut covered = 0usize;
    let mut start = 0usize;
    loop {
        let last = start + chunk_frames >= t_total;
        let window = padded_columns(fm, start, chunk_frames);
        let chunk_logits = model.forward_eval(&window)?;
        let out_start = start / pool;
        let out_hi = if last {
            out_total
        } else {
            (start + chunk_frames - chunk_overlap / 2) / pool
        };
        logits[covered..out_hi].copy_from_slice(&chunk_logits[covered - out_start..out_hi - out_start]);
        covered = out_hi;
        if last {
            break;
        }
        start += stride;
    }
    Ok(logits)
}

/// Copy `cols` columns starting at `start`, zero-padding past the end.
fn padded_columns(fm: &FeatureMatrix, start: usize, cols: usize) -> FeatureMatrix {
    let rows = fm.data.rows;
    let real = fm.data.cols.saturating_sub(start).min(cols);
    let mut data = vec![0.0f32; rows * cols];
    for r in 0..rows {
        let row = fm.data.row(r);
        data[r * cols..r * cols + real].copy_from_slice(&row[start..start + real]);
    }
    FeatureMatrix {
        data: crate::features::Matrix { rows, cols, data },
        frame_rate: fm.frame_rate,
        names: fm.names.clone(),
    }
}

/// Parameters for turning logits into boundary times.
#[derive(Debug, Clone, Copy)]
pub struct PeakParams {
    pub half_width: usize,
    pub threshold: f32,
}

impl Default for PeakParams {
    fn default() -> Self {
        PeakParams { half_width: DEFAULT_PEAK_HALF_WIDTH, threshold: DEFAULT_PEAK_THRESHOLD }
    }
}

/// Windowing used at inference; should mirror the training chunk layout so
/// the model sees familiar padding.
#[derive(Debug, Clone, Copy)]
pub struct ChunkParams {
    pub frames: usize,
    pub overlap: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams { frames: PREDICT_CHUNK_FRAMES, overlap: PREDICT_CHUNK_OVERLAP }
    }
}

/// Full inference for one audio file: decode, resample, extract features,
/// run the model in windows, peak-pick. Returns the prediction and the raw
/// logit curve for plotting.
pub fn predict_boundaries(
    audio_path: &Path,
    model: &Model<f32>,
    fcfg: &FeatureConfig,
    peak: PeakParams,
    chunks: ChunkParams,
) -> EvalResult<(BoundaryPrediction, Vec<f32>)> {
    let clip = resample(&decode_audio(audio_path)?, TARGET_SAMPLE_RATE);
    let fm = extract_features(&clip, fcfg)?;
    let logits = predict_logits_stitched(model, &fm, chunks.frames, chunks.overlap)?;
    let out_rate = fm.frame_rate * logits.len() as f64 / fm.data.cols as f64;
    let prediction = peak_pick(&logits, out_rate, peak.half_width, peak.threshold);
    Ok((prediction, logits))
}

/// Score one prediction against an annotation (begin/end markers trimmed).
pub fn evaluate_against_annotation(
    prediction: &BoundaryPrediction,
    annotation: &AnnotationTrack,
    tolerance: f64,
) -> EvalResult<TrackMetrics> {
    evaluate_track(&prediction.times, &annotation.interior_times(), tolerance)
}

/// Evaluate a model over one manifest split: per-track prediction and
/// scoring in parallel, aggregated into an [`EvalReport`].
pub fn evaluate_corpus(
    manifest: &crate::training::DatasetManifest,
    split: crate::training::Split,
    model: &Model<f32>,
    fcfg: &FeatureConfig,
    tolerance: f64,
    peak: PeakParams,
    chunks: ChunkParams,
) -> EvalResult<EvalReport> {
    use rayon::prelude::*;
    let entries = manifest.split(split);
    if entries.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    let tracks: Vec<EvalResult<NamedTrackMetrics>> = entries
        .par_iter()
        .map(|entry| {
            let annotation = entry.load_annotation().map_err(|e| {
                EvalError::Io(std::io::Error::other(e.to_string()))
            })?;
            let (pred, _) =
                predict_boundaries(Path::new(&entry.audio_path), model, fcfg, peak, chunks)?;
            let metrics = evaluate_against_annotation(&pred, &annotation, tolerance)?;
            Ok(NamedTrackMetrics { audio_path: entry.audio_path.clone(), metrics })
        })
        .collect();
    let tracks = tracks.into_iter().collect::<EvalResult<Vec<_>>>()?;
    EvalReport::from_tracks(tracks, tolerance)
}

/// Two-column prediction text: `time<TAB>probability`.
pub fn serialize_prediction(pred: &BoundaryPrediction) -> String {
    let mut out = String::new();
    for (t, p) in pred.times.iter().zip(&pred.probabilities) {
        out.push_str(&format!("{t:.9}\t{p:.6}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn single_bump_is_one_boundary() {
        let mut logits = vec![-5.0f32; 200];
        for (offset, v) in [-2i32, -1, 0, 1, 2].iter().zip([1.0, 2.0, 3.0, 2.0, 1.0]) {
            logits[(100 + offset) as usize] = v;
        }
        let pred = peak_pick(&logits, 43.0664, 64, 0.5);
        assert_eq!(pred.times.len(), 1);
        assert!((pred.times[0] - 100.0 / 43.0664).abs() < 1e-9);
        assert!(pred.probabilities[0] > 0.9);
    }

    #[test]
    fn all_below_threshold_is_empty() {
        let logits = vec![-10.0f32; 300];
        let pred = peak_pick(&logits, 43.0, 64, 0.5);
        assert!(pred.times.is_empty());
    }

    #[test]
    fn equal_maxima_keep_earliest() {
        let mut logits = vec![0.0f32; 100];
        logits[40] = 2.0;
        logits[50] = 2.0;
        let pred = peak_pick(&logits, 10.0, 64, 0.5);
        assert_eq!(pred.times, vec![4.0]);
    }

    #[test]
    fn local_max_set_invariant_to_monotone_transform() {
        let mut rng = Rng::new(31);
        for _ in 0..50 {
            // coarse grid keeps ties exact under the affine map
            let logits: Vec<f32> =
                (0..120).map(|_| (rng.below(33) as f32 - 16.0) / 4.0).collect();
            let mapped: Vec<f32> = logits.iter().map(|&v| 2.0 * v + 0.25).collect();
            let a = peak_pick(&logits, 1.0, 8, 0.0);
            let b = peak_pick(&mapped, 1.0, 8, 0.0);
            assert_eq!(a.times, b.times);
        }
    }

    #[test]
    fn matching_basics() {
        let m = match_boundaries(&[10.0], &[11.0], 3.0).unwrap();
        assert_eq!(m.len(), 1);
        // one-to-one: two predictions cannot both claim one reference
        let m = match_boundaries(&[10.0, 12.0], &[11.0], 3.0).unwrap();
        assert_eq!(m.len(), 1);
    }

    /// The crossing case greedy matching gets wrong.
    #[test]
    fn matching_beats_greedy() {
        let m = match_boundaries(&[1.0, 4.0], &[3.5, 4.2], 3.0).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m, vec![(0, 0), (1, 1)]); // 3.5<->1.0, 4.2<->4.0
    }

    #[test]
    fn unsorted_input_rejected() {
        assert!(matches!(
            match_boundaries(&[5.0, 1.0], &[2.0], 3.0),
            Err(EvalError::UnsortedInput)
        ));
    }

    #[test]
    fn track_metrics_cases() {
        let m = evaluate_track(&[1.0, 5.0], &[1.0, 5.0], 3.0).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));

        let m = evaluate_track(&[10.0, 25.0], &[11.0, 60.0], 3.0).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));

        let m = evaluate_track(&[], &[3.0], 3.0).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn swap_swaps_precision_and_recall() {
        let mut rng = Rng::new(8);
        for _ in 0..30 {
            let mut a: Vec<f64> = (0..rng.below(8)).map(|_| rng.next_f64() * 60.0).collect();
            let mut b: Vec<f64> = (0..rng.below(8)).map(|_| rng.next_f64() * 60.0).collect();
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let ab = evaluate_track(&a, &b, 3.0).unwrap();
            let ba = evaluate_track(&b, &a, 3.0).unwrap();
            assert!((ab.precision - ba.recall).abs() < 1e-12);
            assert!((ab.recall - ba.precision).abs() < 1e-12);
            assert!((ab.f1 - ba.f1).abs() < 1e-12);
        }
    }

    #[test]
    fn wider_tolerance_never_hurts() {
        let mut rng = Rng::new(9);
        for _ in 0..30 {
            let mut a: Vec<f64> = (0..1 + rng.below(8)).map(|_| rng.next_f64() * 60.0).collect();
            let mut b: Vec<f64> = (0..1 + rng.below(8)).map(|_| rng.next_f64() * 60.0).collect();
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let narrow = evaluate_track(&a, &b, 1.0).unwrap();
            let wide = evaluate_track(&a, &b, 4.0).unwrap();
            assert!(wide.precision >= narrow.precision - 1e-12);
            assert!(wide.recall >= narrow.recall - 1e-12);
            assert!(wide.f1 >= narrow.f1 - 1e-12);
        }
    }

    #[test]
    fn corpus_aggregation_hand_case() {
        let t = |f1: f64| NamedTrackMetrics {
            audio_path: "x".into(),
            metrics: TrackMetrics {
                precision: f1,
                recall: f1,
                f1,
                n_pred: 1,
                n_ref: 1,
                matches: vec![],
            },
        };
        let report = EvalReport::from_tracks(vec![t(0.4), t(0.6)], 3.0).unwrap();
        assert!((report.f1.mean - 0.5).abs() < 1e-12);
        assert!((report.f1.std - 0.1).abs() < 1e-12);
        assert_eq!(format!("{}", report.f1), "0.500 (0.10)");
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(
            EvalReport::from_tracks(vec![], 3.0),
            Err(EvalError::EmptyManifest)
        ));
    }

    /// Exhaustive matching oracle: bitmask DP over the reference side.
    pub fn brute_force_max_matching(pred: &[f64], reference: &[f64], tol: f64) -> usize {
        fn go(
            i: usize,
            used: u32,
            pred: &[f64],
            reference: &[f64],
            tol: f64,
            memo: &mut std::collections::HashMap<(usize, u32), usize>,
        ) -> usize {
            if i == pred.len() {
                return 0;
            }
            if let Some(&v) = memo.get(&(i, used)) {
                return v;
            }
            let mut best = go(i + 1, used, pred, reference, tol, memo);
            for (r, &rt) in reference.iter().enumerate() {
                if used & (1 << r) == 0 && (pred[i] - rt).abs() <= tol {
                    best = best.max(1 + go(i + 1, used | (1 << r), pred, reference, tol, memo));
                }
            }
            memo.insert((i, used), best);
            best
        }
        go(0, 0, pred, reference, tol, &mut std::collections::HashMap::new())
    }

    #[test]
    fn matching_equals_exhaustive_oracle() {
        let mut rng = Rng::new(12);
        for _ in 0..200 {
            let mut pred: Vec<f64> =
                (0..rng.below(11)).map(|_| rng.next_f64() * 40.0).collect();
            let mut reference: Vec<f64> =
                (0..rng.below(11)).map(|_| rng.next_f64() * 40.0).collect();
            pred.sort_by(|a, b| a.partial_cmp(b).unwrap());
            reference.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let ours = match_boundaries(&pred, &reference, 3.0).unwrap().len();
            let oracle = brute_force_max_matching(&pred, &reference, 3.0);
            assert_eq!(ours, oracle, "pred {pred:?} ref {reference:?}");
        }
    }
}
