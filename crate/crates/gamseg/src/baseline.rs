//! Classical unsupervised comparator: cosine self-similarity matrix and a
//! Gaussian-tapered checkerboard kernel correlated along the diagonal, peaks
//! of the resulting novelty curve marking candidate boundaries. Shares the
//! peak picker and evaluator with the learned model.

use std::fmt;
use std::path::Path;

use crate::audio_io::{decode_audio, resample, TARGET_SAMPLE_RATE};
use crate::eval::{peak_pick, BoundaryPrediction};
use crate::features::{extract_features, FeatureConfig, FeatureMatrix};

/// L = kernel half-width in frames (~3 s at the default frame rate), matching
/// the evaluation tolerance scale.
pub const DEFAULT_KERNEL_HALF_WIDTH: usize = 128;
/// Novelty curves live in [0, 1]; a sigmoid threshold of 0.62 keeps peaks
/// above roughly half of the normalized range.
pub const DEFAULT_BASELINE_THRESHOLD: f32 = 0.62;
/// Hard cap: the SSM is dense, O(T^2) memory.
pub const MAX_SSM_FRAMES: usize = 20_000;

/// Frame-by-frame cosine similarities, symmetric with unit diagonal.
#[derive(Debug, Clone)]
pub struct SelfSimilarityMatrix {
    pub size: usize,
    pub values: Vec<f32>, // row-major size x size
    pub frame_rate: f64,
}

impl SelfSimilarityMatrix {
    pub fn at(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.size + j]
    }
}

pub type BaselineResult<T> = Result<T, BaselineError>;

#[derive(Debug)]
pub enum BaselineError {
    KernelTooLarge { kernel: usize, frames: usize },
    TrackTooLong { frames: usize },
    Audio(crate::audio_io::AudioError),
    Feature(crate::features::FeatureError),
}

impl fmt::Display for BaselineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineError::KernelTooLarge { kernel, frames } => {
                write!(f, "checkerboard kernel of {kernel} frames exceeds track length {frames}")
            }
            BaselineError::TrackTooLong { frames } => {
                write!(f, "{frames} frames exceeds the {MAX_SSM_FRAMES}-frame SSM cap")
            }
            BaselineError::Audio(e) => write!(f, "{e}"),
            BaselineError::Feature(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for BaselineError {}

impl From<crate::audio_io::AudioError> for BaselineError {
    fn from(e: crate::audio_io::AudioError) -> Self {
        BaselineError::Audio(e)
    }
}

impl From<crate::features::FeatureError> for BaselineError {
    fn from(e: crate::features::FeatureError) -> Self {
        BaselineError::Feature(e)
    }
}

/// Cosine similarity between all feature-column pairs. Zero-norm columns get
/// zero similarity everywhere except the unit diagonal.
pub fn compute_ssm(fm: &FeatureMatrix) -> BaselineResult<SelfSimilarityMatrix> {
    let t = fm.data.cols;
    if t > MAX_SSM_FRAMES {
        return Err(BaselineError::TrackTooLong { frames: t });
    }
    let rows = fm.data.rows;
    // column-major copy for cache-friendly dot products
    let mut cols = vec![0.0f32; rows * t];
    for r in 0..rows {
        let row = fm.data.row(r);
        for c in 0..t {
            cols[c * rows + r] = row[c];
        }
    }
    let norms: Vec<f32> = (0..t)
        .map(|c| {
            cols[c * rows..(c + 1) * rows].iter().map(|v| v * v).sum::<f32>().sqrt()
        })
        .collect();
    let mut values = vec![0.0f32; t * t];
    for i in 0..t {
        values[i * t + i] = 1.0;
        for j in i + 1..t {
            let sim = if norms[i] > 1e-12 && norms[j] > 1e-12 {
                let a = &cols[i * rows..(i + 1) * rows];
                let b = &cols[j * rows..(j + 1) * rows];
                let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            values[i * t + j] = sim;
            values[j * t + i] = sim;
        }
    }
    Ok(SelfSimilarityMatrix { size: t, values, frame_rate: fm.frame_rate })
}

/// Correlate a 2L x 2L checkerboard kernel (+1 on-diagonal blocks, -1
/// off-diagonal, Gaussian taper sigma = L/2) along the SSM diagonal. Edges
/// are zero-padded; the curve is min-max normalized into [0, 1] (flat curves
/// collapse to zeros).
pub fn foote_novelty(ssm: &SelfSimilarityMatrix, half_width: usize) -> BaselineResult<Vec<f32>> {
    let t = ssm.size;
    let l = half_width.max(1);
    if 2 * l > t {
        return Err(BaselineError::KernelTooLarge { kernel: 2 * l, frames: t });
    }
    // kernel[u][v], u,v in [-L, L), taper relative to the kernel center
    let sigma = l as f32 / 2.0;
    let taper: Vec<f32> = (0..2 * l)
        .map(|u| {
            let d = u as f32 - (l as f32 - 0.5);
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let mut novelty = vec![0.0f32; t];
    for (center, nv) in novelty.iter_mut().enumerate() {
        let mut acc = 0.0f32;
        for u in 0..2 * l {
            let i = center as isize - l as isize + u as isize;
            if i < 0 || i >= t as isize {
                continue;
            }
            let row = &ssm.values[(i as usize) * t..(i as usize + 1) * t];
            let sign_u = u >= l;
            for v in 0..2 * l {
                let j = center as isize - l as isize + v as isize;
                if j < 0 || j >= t as isize {
                    continue;
                }
                let sign = if sign_u == (v >= l) { 1.0 } else { -1.0 };
                acc += sign * taper[u] * taper[v] * row[j as usize];
            }
        }
        *nv = acc;
    }
    // min-max normalize, guarding the flat case
    let min = novelty.iter().cloned().fold(f32::INFINITY, f32::min);
    let max = novelty.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    if max - min < 1e-9 {
        novelty.fill(0.0);
    } else {
        for v in novelty.iter_mut() {
            *v = (*v - min) / (max - min);
        }
    }
    Ok(novelty)
}

/// Unsupervised boundary detection: features -> SSM -> novelty -> the shared
/// peak picker.
pub fn baseline_segment(
    audio_path: &Path,
    fcfg: &FeatureConfig,
    kernel_half_width: usize,
    peak_half_width: usize,
    threshold: f32,
) -> BaselineResult<(BoundaryPrediction, Vec<f32>)> {
    let clip = resample(&decode_audio(audio_path)?, TARGET_SAMPLE_RATE);
    let fm = extract_features(&clip, fcfg)?;
    baseline_segment_features(&fm, kernel_half_width, peak_half_width, threshold)
}

/// Same pipeline starting from already-extracted features.
pub fn baseline_segment_features(
    fm: &FeatureMatrix,
    kernel_half_width: usize,
    peak_half_width: usize,
    threshold: f32,
) -> BaselineResult<(BoundaryPrediction, Vec<f32>)> {
    let ssm = compute_ssm(fm)?;
    let novelty = foote_novelty(&ssm, kernel_half_width)?;
    let pred = peak_pick(&novelty, fm.frame_rate, peak_half_width, threshold);
    Ok((pred, novelty))
}
