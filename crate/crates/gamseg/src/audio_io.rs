//! WAV decoding and sample-rate conversion.
//!
//! Decoding is deliberately restricted to uncompressed RIFF/WAVE (16-bit PCM
//! or 32-bit float, mono or stereo) so the byte-level behaviour stays fully
//! auditable. Everything downstream works on a canonical mono stream at
//! [`TARGET_SAMPLE_RATE`].

use std::fmt;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

/// Canonical sample rate for the whole pipeline.
pub const TARGET_SAMPLE_RATE: u32 = 22_050;

/// Mono audio at a known sample rate.
#[derive(Debug, Clone)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub source_path: Option<String>,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        AudioClip { samples, sample_rate, source_path: None }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

pub type AudioResult<T> = Result<T, AudioError>;

#[derive(Debug)]
pub enum AudioError {
    UnreadableFile { path: String, reason: String },
    UnsupportedEncoding(String),
}

impl fmt::Display for AudioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AudioError::UnreadableFile { path, reason } => {
                write!(f, "cannot read audio file {path}: {reason}")
            }
            AudioError::UnsupportedEncoding(what) => {
                write!(f, "unsupported audio encoding: {what}")
            }
        }
    }
}

impl std::error::Error for AudioError {}

fn unreadable(path: &Path, reason: impl Into<String>) -> AudioError {
    AudioError::UnreadableFile { path: display_path(path), reason: reason.into() }
}

fn display_path(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

/// Decode a PCM WAV file to a mono clip at its native rate. Stereo inputs are
/// averaged down to one channel.
pub fn decode_audio(path: &Path) -> AudioResult<AudioClip> {
    let mut file = File::open(path).map_err(|e| unreadable(path, e.to_string()))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| unreadable(path, e.to_string()))?;
    let mut clip = decode_wav_bytes(&bytes).map_err(|e| match e {
        WavError::Malformed(reason) => unreadable(path, reason),
        WavError::Unsupported(what) => AudioError::UnsupportedEncoding(what),
    })?;
    clip.source_path = Some(display_path(path));
    Ok(clip)
}

enum WavError {
    Malformed(String),
    Unsupported(String),
}

fn decode_wav_bytes(bytes: &[u8]) -> Result<AudioClip, WavError> {
    let malformed = |why: &str| WavError::Malformed(why.to_string());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("not a RIFF/WAVE file"));
    }

    let mut fmt_chunk: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err(malformed("truncated chunk"));
        }
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(malformed("fmt chunk too small"));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt_chunk = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_end + (size & 1);
    }

    let (format, channels, rate, bits) = fmt_chunk.ok_or_else(|| malformed("missing fmt chunk"))?;
    let data = data.ok_or_else(|| malformed("missing data chunk"))?;
    if channels == 0 || channels > 2 {
        return Err(WavError::Unsupported(format!("{channels} channels (need 1 or 2)")));
    }
    if rate == 0 {
        return Err(malformed("zero sample rate"));
    }

    let interleaved: Vec<f32> = match (format, bits) {
        (1, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
            .collect(),
        (3, 32) => {
            let floats: Vec<f32> = data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if floats.iter().any(|v| !v.is_finite()) {
                return Err(malformed("non-finite float samples"));
            }
            floats.iter().map(|v| v.clamp(-1.0, 1.0)).collect()
        }
        (fmt_code, bits) => {
            return Err(WavError::Unsupported(format!(
                "format tag {fmt_code} with {bits} bits (need 16-bit PCM or 32-bit float)"
            )))
        }
    };

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect()
    };
    if samples.is_empty() {
        return Err(malformed("empty data chunk"));
    }
    Ok(AudioClip::new(samples, rate))
}

/// Write a mono clip as 16-bit PCM WAV.
pub fn write_wav(path: &Path, clip: &AudioClip) -> io::Result<()> {
    let n = clip.samples.len();
    let data_bytes = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_bytes).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_bytes.to_le_bytes());
    for &s in &clip.samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    let mut file = File::create(path)?;
    file.write_all(&out)
}

const SINC_TAPS: usize = 64;
const SINC_PHASES: usize = 1024;
const KAISER_BETA: f64 = 8.6;

/// Band-limited resampling with a 64-tap Kaiser-windowed sinc kernel.
/// Returns the clip unchanged when the rate already matches.
pub fn resample(clip: &AudioClip, target_rate: u32) -> AudioClip {
    assert!(target_rate > 0, "target rate must be positive");
    assert!(!clip.samples.is_empty(), "cannot resample an empty clip");
    if clip.sample_rate == target_rate {
        return clip.clone();
    }
    let ratio = target_rate as f64 / clip.sample_rate as f64;
    let samples = resample_ratio(&clip.samples, ratio);
    AudioClip {
        samples,
        sample_rate: target_rate,
        source_path: clip.source_path.clone(),
    }
}

/// Resample by an arbitrary rate ratio (output_len = round(len * ratio)).
/// Also used by pitch shifting, where the nominal rate stays fixed.
pub fn resample_ratio(input: &[f32], ratio: f64) -> Vec<f32> {
    assert!(ratio > 0.0);
    let out_len = (input.len() as f64 * ratio).round().max(1.0) as usize;
    let table = sinc_table(ratio);
    let half = (SINC_TAPS / 2) as isize;
    let step = 1.0 / ratio; // input samples per output sample
    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len {
        let t = j as f64 * step;
        let t0 = t.floor();
        let frac = t - t0;
        let base = t0 as isize;
        // Interpolate between the two nearest precomputed kernel phases.
        let fp = frac * SINC_PHASES as f64;
        let p0 = (fp.floor() as usize).min(SINC_PHASES - 1);
        let p1 = p0 + 1;
        let w1 = (fp - p0 as f64) as f32;
        let w0 = 1.0 - w1;
        let k0 = &table[p0 * SINC_TAPS..(p0 + 1) * SINC_TAPS];
        let k1 = &table[p1 * SINC_TAPS..(p1 + 1) * SINC_TAPS];
        let mut acc = 0.0f32;
        for tap in 0..SINC_TAPS {
            let idx = base - half + 1 + tap as isize;
            if idx < 0 || idx >= input.len() as isize {
                continue;
            }
            let x = input[idx as usize];
            acc += x * (w0 * k0[tap] + w1 * k1[tap]);
        }
        out.push(acc);
    }
    out
}

/// Precompute kernel phases. `phase p, tap k` holds the coefficient for the
/// input sample at offset (k - taps/2 + 1) relative to floor(t), evaluated at
/// fractional position p / SINC_PHASES.
fn sinc_table(ratio: f64) -> Vec<f32> {
    // When downsampling, the cutoff shrinks to the new Nyquist.
    let cutoff = ratio.min(1.0) * 0.985;
    let half = (SINC_TAPS / 2) as f64;
    let denom = bessel_i0(KAISER_BETA);
    let mut table = vec![0.0f32; (SINC_PHASES + 1) * SINC_TAPS];
    for p in 0..=SINC_PHASES {
        let frac = p as f64 / SINC_PHASES as f64;
        for tap in 0..SINC_TAPS {
            let offset = (tap as f64 - half + 1.0) - frac;
            let u = offset / half;
            if u.abs() > 1.0 {
                continue;
            }
            let window = bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / denom;
            table[p * SINC_TAPS + tap] = (cutoff * sinc(cutoff * offset) * window) as f32;
        }
    }
    table
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half_x = x / 2.0;
    for k in 1..32 {
        term *= (half_x / k as f64) * (half_x / k as f64);
        sum += term;
        if term < 1e-16 * sum {
            break;
        }
    }
    sum
}
