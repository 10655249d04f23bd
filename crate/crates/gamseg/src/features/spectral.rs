//! STFT / mel-spectrogram internals shared by the MFCC and onset extractors.
//!
//! Frame convention used everywhere: frames are centered at `t * hop` with
//! reflect padding, giving `T = 1 + floor(len / hop)` frames. The mel scale is
//! the Slaney variant (linear below 1 kHz, log above) with area-normalized
//! triangular filters, and log magnitudes are dB with an 80 dB dynamic-range
//! floor relative to the global peak.

use rustfft::{num_complex::Complex, FftPlanner};

use super::Matrix;

pub const N_MELS: usize = 128;
const AMIN: f32 = 1e-10;
const TOP_DB: f32 = 80.0;

/// Number of centered frames for a signal of `len` samples.
pub fn frame_count(len: usize, hop: usize) -> usize {
    1 + len / hop
}

/// Fold an arbitrary index into [0, len) by mirror reflection (no edge repeat).
pub fn reflect_index(i: isize, len: usize) -> usize {
    debug_assert!(len > 0);
    if len == 1 {
        return 0;
    }
    let n = len as isize;
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f32> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (std::f32::consts::TAU * i as f32 / len as f32).cos())
        .collect()
}

/// Power spectrogram, (window/2 + 1) rows x T cols, centered frames.
pub fn stft_power(samples: &[f32], window: usize, hop: usize) -> Matrix {
    let n_bins = window / 2 + 1;
    let t_frames = frame_count(samples.len(), hop);
    let win = hann(window);
    let fft = FftPlanner::<f32>::new().plan_fft_forward(window);
    let mut out = Matrix::zeros(n_bins, t_frames);
    let mut buf = vec![Complex::new(0.0f32, 0.0); window];
    let half = (window / 2) as isize;
    for t in 0..t_frames {
        let center = (t * hop) as isize;
        for (i, b) in buf.iter_mut().enumerate() {
            let idx = reflect_index(center - half + i as isize, samples.len());
            *b = Complex::new(samples[idx] * win[i], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            out[(k, t)] = buf[k].norm_sqr();
        }
    }
    out
}

/// Slaney-style Hz -> mel.
fn hz_to_mel(hz: f32) -> f32 {
    const F_SP: f32 = 200.0 / 3.0;
    const MIN_LOG_HZ: f32 = 1000.0;
    const MIN_LOG_MEL: f32 = MIN_LOG_HZ / F_SP;
    if hz < MIN_LOG_HZ {
        hz / F_SP
    } else {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / (6.4f32.ln() / 27.0)
    }
}

fn mel_to_hz(mel: f32) -> f32 {
    const F_SP: f32 = 200.0 / 3.0;
    const MIN_LOG_MEL: f32 = 15.0;
    if mel < MIN_LOG_MEL {
        mel * F_SP
    } else {
        1000.0 * ((6.4f32.ln() / 27.0) * (mel - MIN_LOG_MEL)).exp()
    }
}

/// Triangular mel filterbank, stored sparsely as (first_bin, weights) per band.
pub struct MelBank {
    filters: Vec<(usize, Vec<f32>)>,
}

impl MelBank {
    pub fn new(sample_rate: u32, window: usize) -> Self {
        let n_bins = window / 2 + 1;
        let fmax = sample_rate as f32 / 2.0;
        let mel_max = hz_to_mel(fmax);
        // N_MELS + 2 edge frequencies, evenly spaced on the mel axis.
        let edges: Vec<f32> = (0..N_MELS + 2)
            .map(|i| mel_to_hz(mel_max * i as f32 / (N_MELS + 1) as f32))
            .collect();
        let bin_hz = sample_rate as f32 / window as f32;
        let mut filters = Vec::with_capacity(N_MELS);
        for m in 0..N_MELS {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let norm = 2.0 / (hi - lo); // Slaney area normalization
            let first = (lo / bin_hz).ceil().max(0.0) as usize;
            let last = ((hi / bin_hz).floor() as usize).min(n_bins - 1);
            let mut weights = Vec::new();
            for k in first..=last {
                let f = k as f32 * bin_hz;
                let ramp_up = if mid > lo { (f - lo) / (mid - lo) } else { 1.0 };
                let ramp_down = if hi > mid { (hi - f) / (hi - mid) } else { 1.0 };
                weights.push(ramp_up.min(ramp_down).max(0.0) * norm);
            }
            filters.push((first, weights));
        }
        MelBank { filters }
    }

    /// Apply to a power spectrogram -> N_MELS x T mel power.
    pub fn apply(&self, power: &Matrix) -> Matrix {
        let t_frames = power.cols;
        let mut out = Matrix::zeros(N_MELS, t_frames);
        for (m, (first, weights)) in self.filters.iter().enumerate() {
            for t in 0..t_frames {
                let mut acc = 0.0f32;
                for (j, &w) in weights.iter().enumerate() {
                    acc += w * power[(first + j, t)];
                }
                out[(m, t)] = acc;
            }
        }
        out
    }
}

/// dB scaling with global dynamic-range clamp (floor at max - 80 dB).
pub fn power_to_db(power: &mut Matrix) {
    let mut max_db = f32::NEG_INFINITY;
    for v in power.data.iter_mut() {
        *v = 10.0 * v.max(AMIN).log10();
        max_db = max_db.max(*v);
    }
    let floor = max_db - TOP_DB;
    for v in power.data.iter_mut() {
        *v = v.max(floor);
    }
}

/// Orthonormal DCT-II matrix, `n_out` x `n_in`.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Matrix {
    let mut m = Matrix::zeros(n_out, n_in);
    let scale = (2.0 / n_in as f32).sqrt();
    for k in 0..n_out {
        let s = if k == 0 { scale / 2.0f32.sqrt() } else { scale };
        for n in 0..n_in {
            m[(k, n)] = s
                * (std::f32::consts::PI / n_in as f32 * (n as f32 + 0.5) * k as f32).cos();
        }
    }
    m
}
