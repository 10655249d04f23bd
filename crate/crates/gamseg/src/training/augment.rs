//! Audio augmentation: phase-vocoder time stretching and pitch transposition
//! (resample, then stretch back to the original duration).

use rustfft::{num_complex::Complex, FftPlanner};

use crate::annotations::{scale_annotation_times, AnnotationTrack};
use crate::audio_io::{resample_ratio, AudioClip};
use crate::features::frame_count;

use super::{AugmentConfig, TrainError, TrainResult};

const PV_WINDOW: usize = 2048;
const PV_SYN_HOP: usize = 512;

/// Time-stretch by `rate`: output duration is `1/rate` times the input
/// (rate > 1 plays faster). Pitch is preserved.
pub fn phase_vocoder_stretch(samples: &[f32], rate: f64) -> Vec<f32> {
    assert!(rate > 0.0);
    let target_len = ((samples.len() as f64 / rate).round() as usize).max(1);
    if samples.len() < PV_WINDOW * 2 || (rate - 1.0).abs() < 1e-9 {
        // too short to analyze, or identity: resample-free copy/trim
        let mut out = samples.to_vec();
        out.resize(target_len, 0.0);
        return out;
    }
    let ana_hop = ((PV_SYN_HOP as f64 * rate).round() as usize).max(1);
    let window: Vec<f64> = (0..PV_WINDOW)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / PV_WINDOW as f64).cos())
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(PV_WINDOW);
    let ifft = planner.plan_fft_inverse(PV_WINDOW);

    let n_frames = (samples.len() - PV_WINDOW) / ana_hop + 1;
    let half = PV_WINDOW / 2 + 1;
    let mut prev_phase = vec![0.0f64; half];
    let mut phase_accum = vec![0.0f64; half];

    let out_len = (n_frames - 1) * PV_SYN_HOP + PV_WINDOW;
    let mut out = vec![0.0f64; out_len];
    let mut norm = vec![0.0f64; out_len];
    let mut buf = vec![Complex::new(0.0f64, 0.0); PV_WINDOW];

    for frame in 0..n_frames {
        let pos = frame * ana_hop;
        for i in 0..PV_WINDOW {
            buf[i] = Complex::new(samples[pos + i] as f64 * window[i], 0.0);
        }
        fft.process(&mut buf);

        let mut synth = vec![Complex::new(0.0f64, 0.0); PV_WINDOW];
        for k in 0..half {
            let mag = buf[k].norm();
            let phase = buf[k].arg();
            if frame == 0 {
                phase_accum[k] = phase;
            } else {
                // deviation from the expected per-hop advance, wrapped to [-pi, pi]
                let expected =
                    std::f64::consts::TAU * k as f64 * ana_hop as f64 / PV_WINDOW as f64;
                let mut dp = phase - prev_phase[k] - expected;
                dp -= (dp / std::f64::consts::TAU).round() * std::f64::consts::TAU;
                let per_input_sample = (expected + dp) / ana_hop as f64;
                phase_accum[k] += per_input_sample * PV_SYN_HOP as f64;
            }
            prev_phase[k] = phase;
            let c = Complex::from_polar(mag, phase_accum[k]);
            synth[k] = c;
            if k > 0 && k < PV_WINDOW - k {
                synth[PV_WINDOW - k] = c.conj();
            }
        }
        ifft.process(&mut synth);
        let pos_out = frame * PV_SYN_HOP;
        for i in 0..PV_WINDOW {
            let w = window[i];
            out[pos_out + i] += synth[i].re / PV_WINDOW as f64 * w;
            norm[pos_out + i] += w * w;
        }
    }

    let mut result: Vec<f32> = out
        .iter()
        .zip(&norm)
        .map(|(&v, &n)| if n > 1e-8 { (v / n) as f32 } else { 0.0 })
        .collect();
    result.resize(target_len, 0.0);
    result
}

/// Pitch shift by `semitones` with the duration preserved: resample by
/// 2^(-s/12), then stretch the shortened/lengthened signal back.
pub fn pitch_shift(samples: &[f32], semitones: f64) -> Vec<f32> {
    if semitones == 0.0 {
        return samples.to_vec();
    }
    let factor = (semitones / 12.0).exp2();
    let resampled = resample_ratio(samples, 1.0 / factor);
    let mut out = phase_vocoder_stretch(&resampled, 1.0 / factor);
    out.resize(samples.len(), 0.0);
    out
}

/// Tempo-stretch and/or pitch-shift one track, rescaling its annotation for
/// the tempo change. Pitch transposition leaves boundary times untouched.
pub fn augment_track(
    clip: &AudioClip,
    track: &AnnotationTrack,
    tempo_rate: f64,
    semitones: f64,
    cfg: &AugmentConfig,
) -> TrainResult<(AudioClip, AnnotationTrack)> {
    let (lo, hi) = cfg.tempo_range;
    if !(lo..=hi).contains(&tempo_rate) {
        return Err(TrainError::RateOutOfRange(format!(
            "tempo rate {tempo_rate} outside [{lo}, {hi}]"
        )));
    }
    let (plo, phi) = cfg.pitch_semitones;
    if !(plo..=phi).contains(&semitones) {
        return Err(TrainError::RateOutOfRange(format!(
            "pitch shift {semitones} semitones outside [{plo}, {phi}]"
        )));
    }
    if tempo_rate == 1.0 && semitones == 0.0 {
        return Ok((clip.clone(), track.clone()));
    }

    let pitch_factor = (semitones / 12.0).exp2();
    // pitch = resample then stretch; a tempo change folds into the same
    // stretch pass, so both transforms cost one vocoder run
    let resampled;
    let source: &[f32] = if semitones != 0.0 {
        resampled = resample_ratio(&clip.samples, 1.0 / pitch_factor);
        &resampled
    } else {
        &clip.samples
    };
    let stretch_rate = tempo_rate / pitch_factor;
    let mut samples = phase_vocoder_stretch(source, stretch_rate);
    let target_len = ((clip.samples.len() as f64 / tempo_rate).round() as usize).max(1);
    samples.resize(target_len, 0.0);

    let out_clip = AudioClip {
        samples,
        sample_rate: clip.sample_rate,
        source_path: clip.source_path.clone(),
    };
    Ok((out_clip, scale_annotation_times(track, tempo_rate)))
}

/// Number of feature frames an augmented clip will produce; handy for
/// pre-sizing target vectors in tests.
pub fn stretched_frame_count(original_len: usize, tempo_rate: f64, hop: usize) -> usize {
    frame_count(((original_len as f64 / tempo_rate).round() as usize).max(1), hop)
}
