//! Constant-Q magnitude spectrum via direct windowed kernels.
//!
//! Each bin correlates the signal with a Hann-windowed complex exponential
//! whose length scales inversely with frequency (constant Q = 1/(2^(1/B)-1)).
//! Direct evaluation is O(T * sum(kernel lengths)) which is comfortably fast
//! at desk scale and trivially auditable against the closed-form bin centers.

use super::spectral::{frame_count, reflect_index};
use super::{FeatureConfig, Matrix};

/// Center frequency of bin `k`: fmin * 2^(k / bins_per_octave).
pub fn bin_frequency(cfg: &FeatureConfig, k: usize) -> f64 {
    cfg.cqt_fmin * (k as f64 / cfg.bins_per_octave as f64).exp2()
}

struct Kernel {
    cos: Vec<f32>,
    sin: Vec<f32>,
}

fn build_kernels(cfg: &FeatureConfig, sample_rate: u32) -> Vec<Kernel> {
    let q = 1.0 / ((1.0 / cfg.bins_per_octave as f64).exp2() - 1.0);
    let mut kernels = Vec::with_capacity(cfg.n_cqt_bins);
    for k in 0..cfg.n_cqt_bins {
        let freq = bin_frequency(cfg, k);
        let len = (q * sample_rate as f64 / freq).ceil() as usize;
        let len = len.max(4);
        let mut cos = Vec::with_capacity(len);
        let mut sin = Vec::with_capacity(len);
        let mut win_sum = 0.0f64;
        for i in 0..len {
            let w = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / len as f64).cos();
            win_sum += w;
            let phase =
                std::f64::consts::TAU * freq * (i as f64 - len as f64 / 2.0) / sample_rate as f64;
            cos.push((w * phase.cos()) as f32);
            sin.push((w * phase.sin()) as f32);
        }
        // Normalize so a unit-amplitude sine at the bin center reads ~0.5.
        let norm = (1.0 / win_sum) as f32;
        for v in cos.iter_mut() {
            *v *= norm;
        }
        for v in sin.iter_mut() {
            *v *= norm;
        }
        kernels.push(Kernel { cos, sin });
    }
    kernels
}

/// Constant-Q magnitudes, n_cqt_bins x T, same frame grid as the STFT.
pub fn cqt_magnitude(samples: &[f32], cfg: &FeatureConfig, sample_rate: u32) -> Matrix {
    let t_frames = frame_count(samples.len(), cfg.hop);
    let kernels = build_kernels(cfg, sample_rate);
    let mut out = Matrix::zeros(cfg.n_cqt_bins, t_frames);
    for (k, kernel) in kernels.iter().enumerate() {
        let len = kernel.cos.len();
        let half = (len / 2) as isize;
        for t in 0..t_frames {
            let center = (t * cfg.hop) as isize;
            let start = center - half;
            let mut re = 0.0f32;
            let mut im = 0.0f32;
            if start >= 0 && (start + len as isize) <= samples.len() as isize {
                // Fast path: window fully inside the signal.
                let s = &samples[start as usize..start as usize + len];
                for ((&x, &kc), &ks) in s.iter().zip(&kernel.cos).zip(&kernel.sin) {
                    re += x * kc;
                    im += x * ks;
                }
            } else {
                for i in 0..len {
                    let idx = reflect_index(start + i as isize, samples.len());
                    re += samples[idx] * kernel.cos[i];
                    im += samples[idx] * kernel.sin[i];
                }
            }
            out[(k, t)] = (re * re + im * im).sqrt();
        }
    }
    out
}
