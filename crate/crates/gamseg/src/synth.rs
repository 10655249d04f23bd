//! Synthetic track generation: concatenated sections with controlled timbre,
//! tempo, pitch, and level changes, plus the matching annotation. Gives the
//! trainer and evaluator ground truth without any copyrighted audio.

use std::fmt;
use std::path::Path;

use crate::annotations::{serialize_annotation, AnnotationTrack, BoundaryEvent, Category};
use crate::audio_io::{write_wav, AudioClip, TARGET_SAMPLE_RATE};
use crate::rng::Rng;

const CROSSFADE_SECS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Waveform {
    Sine,
    Square,
    Saw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timbre {
    pub waveform: Waveform,
    pub base_freq: f64,
    pub harmonics: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionSpec {
    pub duration_secs: f64,
    pub timbre: Timbre,
    pub tempo_bpm: f64,
    pub amplitude: f32,
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub sections: Vec<SectionSpec>,
    pub seed: u64,
}

#[derive(Debug)]
pub enum SynthError {
    SpecInvalid(String),
    Io(std::io::Error),
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::SpecInvalid(why) => write!(f, "invalid synth spec: {why}"),
            SynthError::Io(e) => write!(f, "synth i/o: {e}"),
        }
    }
}

impl std::error::Error for SynthError {}

impl From<std::io::Error> for SynthError {
    fn from(e: std::io::Error) -> Self {
        SynthError::Io(e)
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |why: String| Err(SynthError::SpecInvalid(why));
        if self.sections.len() < 2 {
            return bad("need at least 2 sections".into());
        }
        for (i, s) in self.sections.iter().enumerate() {
            if s.duration_secs < 2.0 {
                return bad(format!("section {i} shorter than 2 s"));
            }
            if s.timbre.base_freq <= 0.0 || s.timbre.harmonics == 0 {
                return bad(format!("section {i} has a degenerate timbre"));
            }
            if s.tempo_bpm <= 0.0 || !(0.0..=1.0).contains(&s.amplitude) {
                return bad(format!("section {i} has tempo/amplitude out of range"));
            }
        }
        for (i, pair) in self.sections.windows(2).enumerate() {
            if section_change_categories(&pair[0], &pair[1]).is_empty() {
                return bad(format!("sections {i} and {} are identical", i + 1));
            }
        }
        Ok(())
    }
}

/// Category codes implied by which attributes change across a section join:
/// timbre -> t, tempo -> r, amplitude -> d, base frequency -> p.
pub fn section_change_categories(a: &SectionSpec, b: &SectionSpec) -> Vec<Category> {
    let mut cats = Vec::new();
    if a.timbre.waveform != b.timbre.waveform || a.timbre.harmonics != b.timbre.harmonics {
        cats.push(Category::Timbre);
    }
    if a.tempo_bpm != b.tempo_bpm {
        cats.push(Category::Rhythm);
    }
    if a.amplitude != b.amplitude {
        cats.push(Category::Dynamic);
    }
    if a.timbre.base_freq != b.timbre.base_freq {
        cats.push(Category::Pitch);
    }
    cats
}

fn render_section(spec: &SectionSpec, n_samples: usize, phase_seed: u64) -> Vec<f32> {
    let sr = TARGET_SAMPLE_RATE as f64;
    let mut rng = Rng::new(phase_seed);
    let phase0 = rng.next_f64() * std::f64::consts::TAU;
    let mut out = vec![0.0f32; n_samples];

    // Additive tone: harmonic weights depend on the waveform family.
    let nyquist = sr / 2.0;
    for h in 1..=spec.timbre.harmonics {
        let freq = spec.timbre.base_freq * h as f64;
        if freq >= nyquist {
            break;
        }
        let weight = match spec.timbre.waveform {
            Waveform::Sine => {
                if h == 1 {
                    1.0
                } else {
                    0.0
                }
            }
            Waveform::Square => {
                if h % 2 == 1 {
                    1.0 / h as f64
                } else {
                    0.0
                }
            }
            Waveform::Saw => 1.0 / h as f64,
        };
        if weight == 0.0 {
            continue;
        }
        let step = std::f64::consts::TAU * freq / sr;
        for (i, v) in out.iter_mut().enumerate() {
            *v += (weight * (phase0 + step * i as f64).sin()) as f32;
        }
    }
    let peak = out.iter().fold(0.0f32, |m, &v| m.max(v.abs())).max(1e-9);
    let tone_gain = 0.7 * spec.amplitude / peak;
    for v in out.iter_mut() {
        *v *= tone_gain;
    }

    // Percussive clicks on the tempo grid: short decaying noise bursts.
    let beat = 60.0 / spec.tempo_bpm;
    let click_len = (0.02 * sr) as usize;
    let mut t = 0.0f64;
    while t < n_samples as f64 / sr {
        let start = (t * sr) as usize;
        for i in 0..click_len.min(n_samples.saturating_sub(start)) {
            let env = (1.0 - i as f32 / click_len as f32).powi(2);
            out[start + i] += 0.25 * spec.amplitude * env * rng.uniform(-1.0, 1.0);
        }
        t += beat;
    }
    out
}

/// Render a spec to audio plus its ground-truth annotation. Boundary times in
/// the annotation equal the cumulative section durations exactly; sections
/// are joined with a short equal-power crossfade.
pub fn generate_synthetic_track(
    spec: &SynthSpec,
) -> Result<(AudioClip, AnnotationTrack), SynthError> {
    spec.validate()?;
    let sr = TARGET_SAMPLE_RATE as f64;
    let fade = (CROSSFADE_SECS * sr) as usize;

    let total_samples: usize =
        spec.sections.iter().map(|s| (s.duration_secs * sr).round() as usize).sum();
    let mut samples = vec![0.0f32; total_samples];

    let mut events = vec![BoundaryEvent {
        time: 0.0,
        categories: vec![Category::Begin],
        fine_label: Some("a".into()),
        coarse_label: None,
        function_label: Some("intro".into()),
    }];

    let mut cursor = 0usize;
    let mut elapsed = 0.0f64;
    for (i, section) in spec.sections.iter().enumerate() {
        let n = (section.duration_secs * sr).round() as usize;
        // render a little extra so the crossfade into the next section has material
        let extra = if i + 1 < spec.sections.len() { fade } else { 0 };
        let rendered = render_section(section, n + extra, spec.seed.wrapping_add(i as u64));
        for (j, &v) in rendered.iter().enumerate() {
            let dst = cursor + j;
            if dst >= total_samples {
                break;
            }
            let gain = if j >= n {
                // tail fading out under the next section
                let u = (j - n) as f32 / fade as f32;
                (1.0 - u).sqrt()
            } else if i > 0 && j < fade {
                // head fading in over the previous section's tail
                (j as f32 / fade as f32).sqrt()
            } else {
                1.0
            };
            samples[dst] += v * gain;
        }
        cursor += n;
        elapsed += section.duration_secs;
        if i + 1 < spec.sections.len() {
            let cats = section_change_categories(section, &spec.sections[i + 1]);
            events.push(BoundaryEvent::at(elapsed, cats));
        }
    }
    events.push(BoundaryEvent {
        time: elapsed,
        categories: vec![Category::End],
        fine_label: None,
        coarse_label: None,
        function_label: None,
    });

    for v in samples.iter_mut() {
        *v = v.clamp(-1.0, 1.0);
    }
    let track = AnnotationTrack::new(events)
        .map_err(|e| SynthError::SpecInvalid(format!("generated annotation invalid: {e}")))?;
    Ok((AudioClip::new(samples, TARGET_SAMPLE_RATE), track))
}

// pentatonic-ish base frequencies keep tones well inside the CQT range
const FREQS: [f64; 6] = [110.0, 146.83, 196.0, 261.63, 329.63, 440.0];
const TEMPOS: [f64; 3] = [84.0, 112.0, 140.0];
const WAVEFORMS: [Waveform; 3] = [Waveform::Sine, Waveform::Square, Waveform::Saw];

fn random_section(rng: &mut Rng) -> SectionSpec {
    SectionSpec {
        duration_secs: 8.0 + rng.next_f64() * 8.0,
        timbre: Timbre {
            waveform: WAVEFORMS[rng.below(3)],
            base_freq: FREQS[rng.below(FREQS.len())],
            harmonics: 1 + rng.below(8),
        },
        tempo_bpm: TEMPOS[rng.below(3)],
        amplitude: 0.5 + 0.4 * rng.next_f32(),
    }
}

/// Draw a random but valid spec: 2-4 sections, 8-16 s each, adjacent sections
/// guaranteed to differ in at least one attribute. Roughly half the joins
/// change a single attribute (level, tempo, or pitch) so the corpus also
/// carries the subtle boundary categories, not just blunt timbre swaps.
pub fn random_spec(rng: &mut Rng) -> SynthSpec {
    let seed = rng.next_u64();
    let n_sections = 2 + rng.below(3);
    let mut sections: Vec<SectionSpec> = vec![random_section(rng)];
    for _ in 1..n_sections {
        let prev = sections.last().unwrap().clone();
        let mut next = SectionSpec { duration_secs: 8.0 + rng.next_f64() * 8.0, ..prev.clone() };
        match rng.below(6) {
            // amplitude-only join (category d): jump to a clearly distinct level
            0 => {
                next.amplitude =
                    if prev.amplitude > 0.6 { rng.uniform(0.25, 0.4) } else { rng.uniform(0.75, 0.95) }
            }
            // tempo-only join (category r)
            1 => loop {
                next.tempo_bpm = TEMPOS[rng.below(3)];
                if next.tempo_bpm != prev.tempo_bpm {
                    break;
                }
            },
            // pitch-only join (category p)
            2 => loop {
                next.timbre.base_freq = FREQS[rng.below(FREQS.len())];
                if next.timbre.base_freq != prev.timbre.base_freq {
                    break;
                }
            },
            // full redraw, usually a timbre change plus friends
            _ => loop {
                next = SectionSpec { duration_secs: next.duration_secs, ..random_section(rng) };
                if !section_change_categories(&prev, &next).is_empty() {
                    break;
                }
            },
        }
        sections.push(next);
    }
    SynthSpec { sections, seed }
}

/// One generated corpus entry on disk.
#[derive(Debug, Clone)]
pub struct GeneratedTrack {
    pub audio_path: String,
    pub annotation_path: String,
    pub track: AnnotationTrack,
}

/// Generate `count` tracks into `dir` as WAV + annotation file pairs.
pub fn generate_corpus(
    dir: &Path,
    count: usize,
    seed: u64,
    prefix: &str,
) -> Result<Vec<GeneratedTrack>, SynthError> {
    std::fs::create_dir_all(dir)?;
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let spec = random_spec(&mut rng);
        let (clip, track) = generate_synthetic_track(&spec)?;
        let audio_path = dir.join(format!("{prefix}{i:03}.wav"));
        let annotation_path = dir.join(format!("{prefix}{i:03}.txt"));
        write_wav(&audio_path, &clip)?;
        std::fs::write(&annotation_path, serialize_annotation(&track))?;
        out.push(GeneratedTrack {
            audio_path: audio_path.to_string_lossy().into_owned(),
            annotation_path: annotation_path.to_string_lossy().into_owned(),
            track,
        });
    }
    Ok(out)
}
