//! Audio feature extraction: MFCC, constant-Q magnitudes, and an onset
//! envelope, z-scored per block and stacked into the 98-row model input.

mod cqt;
mod spectral;

pub use cqt::bin_frequency;
pub use spectral::frame_count;

use std::fmt;
use std::fs::File;
use std::io::{self, Read, Write};
use std::ops::{Index, IndexMut};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio_io::{AudioClip, TARGET_SAMPLE_RATE};
use spectral::{dct_matrix, power_to_db, stft_power, MelBank, N_MELS};

/// Dense row-major matrix of f32, rows = feature dimensions, cols = frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<f32>>) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            assert_eq!(row.len(), n_cols);
            data.extend(row);
        }
        Matrix { rows: n_rows, cols: n_cols, data }
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f32;
    fn index(&self, (r, c): (usize, usize)) -> &f32 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f32 {
        &mut self.data[r * self.cols + c]
    }
}

/// Extraction parameters. Defaults give the canonical 98-row stack
/// (13 MFCC + 84 CQT bins + 1 onset row) at 22050 Hz.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeatureConfig {
    pub window: usize,
    pub hop: usize,
    pub n_mfcc: usize,
    pub n_cqt_bins: usize,
    pub cqt_fmin: f64,
    pub bins_per_octave: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window: 2048,
            hop: 512,
            n_mfcc: 13,
            n_cqt_bins: 84,
            cqt_fmin: 32.703, // C1
            bins_per_octave: 12,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> FeatureResult<()> {
        let bad = |why: String| Err(FeatureError::InvalidConfig(why));
        if !self.window.is_power_of_two() {
            return bad(format!("window {} is not a power of two", self.window));
        }
        if self.hop == 0 || self.hop > self.window {
            return bad(format!("hop {} must be in 1..=window", self.hop));
        }
        if self.n_mfcc == 0 || self.n_mfcc > N_MELS {
            return bad(format!("n_mfcc {} must be in 1..={N_MELS}", self.n_mfcc));
        }
        if self.bins_per_octave == 0 || self.n_cqt_bins == 0
            || !self.n_cqt_bins.is_multiple_of(self.bins_per_octave)
        {
            return bad(format!(
                "n_cqt_bins {} must be a positive multiple of bins_per_octave {}",
                self.n_cqt_bins, self.bins_per_octave
            ));
        }
        if self.cqt_fmin <= 0.0 || self.cqt_fmin.is_nan() {
            return bad(format!("cqt_fmin {} must be positive", self.cqt_fmin));
        }
        Ok(())
    }

    /// Frames per second of the extracted features.
    pub fn frame_rate(&self) -> f64 {
        TARGET_SAMPLE_RATE as f64 / self.hop as f64
    }

    /// Total stacked rows (mfcc + cqt + onset).
    pub fn total_rows(&self) -> usize {
        self.n_mfcc + self.n_cqt_bins + 1
    }
}

/// Stacked, normalized feature grid: rows x T with named row groups.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Matrix,
    pub frame_rate: f64,
    pub names: Vec<(String, usize)>,
}

pub type FeatureResult<T> = Result<T, FeatureError>;

#[derive(Debug)]
pub enum FeatureError {
    ClipTooShort { len: usize, window: usize },
    ColumnMismatch { mfcc: usize, cqt: usize, onset: usize },
    InvalidConfig(String),
    Io(io::Error),
    BadMagic,
    DimensionOverflow { rows: u32, cols: u32 },
}

impl fmt::Display for FeatureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureError::ClipTooShort { len, window } => {
                write!(f, "clip of {len} samples is shorter than one window ({window})")
            }
            FeatureError::ColumnMismatch { mfcc, cqt, onset } => {
                write!(f, "frame counts disagree: mfcc {mfcc}, cqt {cqt}, onset {onset}")
            }
            FeatureError::InvalidConfig(why) => write!(f, "invalid feature config: {why}"),
            FeatureError::Io(e) => write!(f, "feature file i/o: {e}"),
            FeatureError::BadMagic => write!(f, "not a feature file (bad magic)"),
            FeatureError::DimensionOverflow { rows, cols } => {
                write!(f, "unusable feature dimensions {rows}x{cols}")
            }
        }
    }
}

impl std::error::Error for FeatureError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            FeatureError::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for FeatureError {
    fn from(e: io::Error) -> Self {
        FeatureError::Io(e)
    }
}

fn check_clip(clip: &AudioClip, cfg: &FeatureConfig) -> FeatureResult<()> {
    cfg.validate()?;
    assert_eq!(
        clip.sample_rate, TARGET_SAMPLE_RATE,
        "clip must be resampled to {TARGET_SAMPLE_RATE} Hz before feature extraction"
    );
    if clip.samples.len() < cfg.window {
        return Err(FeatureError::ClipTooShort { len: clip.samples.len(), window: cfg.window });
    }
    Ok(())
}

/// Log-mel spectrogram in dB, shared by MFCC and onset.
fn mel_db(clip: &AudioClip, cfg: &FeatureConfig) -> Matrix {
    let power = stft_power(&clip.samples, cfg.window, cfg.hop);
    let bank = MelBank::new(TARGET_SAMPLE_RATE, cfg.window);
    let mut mel = bank.apply(&power);
    power_to_db(&mut mel);
    mel
}

fn mfcc_from_db(db: &Matrix, cfg: &FeatureConfig) -> Matrix {
    let dct = dct_matrix(cfg.n_mfcc, N_MELS);
    let mut out = Matrix::zeros(cfg.n_mfcc, db.cols);
    for k in 0..cfg.n_mfcc {
        for t in 0..db.cols {
            let mut acc = 0.0f32;
            for n in 0..N_MELS {
                acc += dct[(k, n)] * db[(n, t)];
            }
            out[(k, t)] = acc;
        }
    }
    out
}

fn onset_from_db(db: &Matrix, cfg: &FeatureConfig) -> Matrix {
    let t_frames = db.cols;
    // Raw positive spectral flux, then a half-window shift so the peak lines
    // up with the event time under the centered-frame convention.
    let shift = cfg.window / (2 * cfg.hop);
    let mut out = Matrix::zeros(1, t_frames);
    for t in 1..t_frames {
        let mut flux = 0.0f32;
        for b in 0..N_MELS {
            let d = db[(b, t)] - db[(b, t - 1)];
            if d > 0.0 {
                flux += d;
            }
        }
        let dst = t + shift;
        if dst < t_frames {
            out[(0, dst)] = flux;
        }
    }
    out
}

/// 13 x T mel-frequency cepstral coefficients.
pub fn compute_mfcc(clip: &AudioClip, cfg: &FeatureConfig) -> FeatureResult<Matrix> {
    check_clip(clip, cfg)?;
    Ok(mfcc_from_db(&mel_db(clip, cfg), cfg))
}

/// 84 x T constant-Q magnitudes.
pub fn compute_cqt_mag(clip: &AudioClip, cfg: &FeatureConfig) -> FeatureResult<Matrix> {
    check_clip(clip, cfg)?;
    Ok(cqt::cqt_magnitude(&clip.samples, cfg, TARGET_SAMPLE_RATE))
}

/// 1 x T onset envelope (positive spectral flux over the log-mel bands).
pub fn compute_onset_env(clip: &AudioClip, cfg: &FeatureConfig) -> FeatureResult<Matrix> {
    check_clip(clip, cfg)?;
    Ok(onset_from_db(&mel_db(clip, cfg), cfg))
}

/// Per-row z-score with population statistics. Rows with (near-)zero spread
/// become all zeros instead of blowing up.
pub fn zscore_normalize(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..m.rows {
        let row = out.row_mut(r);
        let n = row.len() as f64;
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std < 1e-8 {
            row.fill(0.0);
        } else {
            for v in row.iter_mut() {
                *v = ((*v as f64 - mean) / std) as f32;
            }
        }
    }
    out
}

/// Z-score each block, then stack rows as [mfcc; cqt; onset].
pub fn stack_features(
    mfcc: &Matrix,
    cqt: &Matrix,
    onset: &Matrix,
    frame_rate: f64,
) -> FeatureResult<FeatureMatrix> {
    if mfcc.cols != cqt.cols || mfcc.cols != onset.cols {
        return Err(FeatureError::ColumnMismatch {
            mfcc: mfcc.cols,
            cqt: cqt.cols,
            onset: onset.cols,
        });
    }
    let blocks = [zscore_normalize(mfcc), zscore_normalize(cqt), zscore_normalize(onset)];
    let rows = blocks.iter().map(|b| b.rows).sum();
    let mut data = Vec::with_capacity(rows * mfcc.cols);
    for block in &blocks {
        data.extend_from_slice(&block.data);
    }
    Ok(FeatureMatrix {
        data: Matrix { rows, cols: mfcc.cols, data },
        frame_rate,
        names: vec![
            ("mfcc".into(), mfcc.rows),
            ("cqt".into(), cqt.rows),
            ("onset".into(), onset.rows),
        ],
    })
}

/// Full pipeline: clip (already at 22050 Hz) -> stacked 98 x T features.
pub fn extract_features(clip: &AudioClip, cfg: &FeatureConfig) -> FeatureResult<FeatureMatrix> {
    check_clip(clip, cfg)?;
    let db = mel_db(clip, cfg);
    let mfcc = mfcc_from_db(&db, cfg);
    let onset = onset_from_db(&db, cfg);
    let cqt = cqt::cqt_magnitude(&clip.samples, cfg, TARGET_SAMPLE_RATE);
    stack_features(&mfcc, &cqt, &onset, cfg.frame_rate())
}

const FEAT_MAGIC: &[u8; 8] = b"FEAT0001";
const MAX_DIM: u32 = 1 << 24;

/// Binary feature file: magic | u32 rows | u32 cols | f64 frame_rate | f32 payload.
pub fn write_feature_file(fm: &FeatureMatrix, path: &Path) -> FeatureResult<()> {
    let mut out = Vec::with_capacity(24 + fm.data.data.len() * 4);
    out.extend_from_slice(FEAT_MAGIC);
    out.extend_from_slice(&(fm.data.rows as u32).to_le_bytes());
    out.extend_from_slice(&(fm.data.cols as u32).to_le_bytes());
    out.extend_from_slice(&fm.frame_rate.to_le_bytes());
    for &v in &fm.data.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn read_feature_file(path: &Path) -> FeatureResult<FeatureMatrix> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 24 {
        return Err(FeatureError::Io(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            "truncated header",
        )));
    }
    if &bytes[0..8] != FEAT_MAGIC {
        return Err(FeatureError::BadMagic);
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    if rows == 0 || cols == 0 || rows > MAX_DIM || cols > MAX_DIM {
        return Err(FeatureError::DimensionOverflow { rows, cols });
    }
    let frame_rate = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let n = rows as usize * cols as usize;
    if bytes.len() != 24 + n * 4 {
        return Err(FeatureError::Io(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            format!("expected {} payload bytes, found {}", n * 4, bytes.len() - 24),
        )));
    }
    let data: Vec<f32> = bytes[24..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let names = standard_names(rows as usize);
    Ok(FeatureMatrix {
        data: Matrix { rows: rows as usize, cols: cols as usize, data },
        frame_rate,
        names,
    })
}

fn standard_names(rows: usize) -> Vec<(String, usize)> {
    if rows == 98 {
        vec![("mfcc".into(), 13), ("cqt".into(), 84), ("onset".into(), 1)]
    } else {
        vec![("data".into(), rows)]
    }
}
