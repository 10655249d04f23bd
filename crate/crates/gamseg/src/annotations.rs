//! Structural annotation handling: the bracketed text format for boundary
//! events (time, category codes, fine/coarse/function labels), a plain
//! two-column variant, frame-level training targets, and corpus statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;

/// Perceived boundary-change categories plus the begin/end markers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Rhythm,     // r
    Dynamic,    // d
    Timbre,     // t
    Pitch,      // p
    Harmony,    // h
    Regularity, // rg
    Repetition, // rp
    Begin,      // b
    End,        // e
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::Rhythm,
        Category::Dynamic,
        Category::Timbre,
        Category::Pitch,
        Category::Harmony,
        Category::Regularity,
        Category::Repetition,
        Category::Begin,
        Category::End,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Category::Rhythm => "r",
            Category::Dynamic => "d",
            Category::Timbre => "t",
            Category::Pitch => "p",
            Category::Harmony => "h",
            Category::Regularity => "rg",
            Category::Repetition => "rp",
            Category::Begin => "b",
            Category::End => "e",
        }
    }

    pub fn from_code(code: &str) -> Option<Category> {
        Category::ALL.iter().copied().find(|c| c.code() == code)
    }
}

/// One annotated boundary instant.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEvent {
    pub time: f64,
    pub categories: Vec<Category>, // ordered, no duplicates
    pub fine_label: Option<String>,
    pub coarse_label: Option<String>,
    pub function_label: Option<String>,
}

impl BoundaryEvent {
    pub fn at(time: f64, categories: Vec<Category>) -> Self {
        BoundaryEvent { time, categories, fine_label: None, coarse_label: None, function_label: None }
    }

    pub fn is_marker(&self) -> bool {
        self.categories.contains(&Category::Begin) || self.categories.contains(&Category::End)
    }
}

/// Ordered boundary events spanning one track, begin marker first, end last.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationTrack {
    pub events: Vec<BoundaryEvent>,
}

impl AnnotationTrack {
    /// Validating constructor; every parser funnels through here.
    pub fn new(events: Vec<BoundaryEvent>) -> AnnotationResult<Self> {
        if events.len() < 2 {
            return Err(AnnotationError::MissingBeginEnd(
                "a track needs at least a begin and an end event".into(),
            ));
        }
        for pair in events.windows(2) {
            if pair[1].time <= pair[0].time {
                return Err(AnnotationError::NonMonotonicTime { time: pair[1].time });
            }
        }
        for (i, ev) in events.iter().enumerate() {
            let has_b = ev.categories.contains(&Category::Begin);
            let has_e = ev.categories.contains(&Category::End);
            if has_b && has_e {
                return Err(AnnotationError::MissingBeginEnd(format!(
                    "event at {:.3} s carries both begin and end",
                    ev.time
                )));
            }
            if has_b && i != 0 {
                return Err(AnnotationError::MissingBeginEnd(format!(
                    "begin marker on interior event at {:.3} s",
                    ev.time
                )));
            }
            if has_e && i != events.len() - 1 {
                return Err(AnnotationError::MissingBeginEnd(format!(
                    "end marker on interior event at {:.3} s",
                    ev.time
                )));
            }
        }
        if !events[0].categories.contains(&Category::Begin) {
            return Err(AnnotationError::MissingBeginEnd("first event lacks begin marker".into()));
        }
        if !events.last().unwrap().categories.contains(&Category::End) {
            return Err(AnnotationError::MissingBeginEnd("last event lacks end marker".into()));
        }
        Ok(AnnotationTrack { events })
    }

    /// Track length in seconds (time of the end marker).
    pub fn duration(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.time)
    }

    /// Boundary times excluding the begin/end markers.
    pub fn interior_times(&self) -> Vec<f64> {
        self.events.iter().filter(|e| !e.is_marker()).map(|e| e.time).collect()
    }
}

/// Frame-level binary targets for training.
#[derive(Debug, Clone)]
pub struct FrameTargets {
    pub values: Vec<f32>, // 0.0 or 1.0
    pub frame_rate: f64,
    pub smear: usize,
}

pub type AnnotationResult<T> = Result<T, AnnotationError>;

#[derive(Debug)]
pub enum AnnotationError {
    MalformedLine { line: usize, reason: String },
    NonMonotonicTime { time: f64 },
    MissingBeginEnd(String),
    Io(std::io::Error),
}

impl fmt::Display for AnnotationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotationError::MalformedLine { line, reason } => {
                write!(f, "malformed annotation line {line}: {reason}")
            }
            AnnotationError::NonMonotonicTime { time } => {
                write!(f, "timestamps must strictly increase (violated at {time} s)")
            }
            AnnotationError::MissingBeginEnd(why) => write!(f, "begin/end markers invalid: {why}"),
            AnnotationError::Io(e) => write!(f, "annotation i/o: {e}"),
        }
    }
}

impl std::error::Error for AnnotationError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            AnnotationError::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for AnnotationError {
    fn from(e: std::io::Error) -> Self {
        AnnotationError::Io(e)
    }
}

/// Parse the bracketed annotation text format:
/// `time<TAB>[codes], fine[, coarse[, function]]`.
pub fn parse_annotation(text: &str) -> AnnotationResult<AnnotationTrack> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        events.push(parse_event_line(line, line_no)?);
    }
    AnnotationTrack::new(events)
}

fn parse_event_line(line: &str, line_no: usize) -> AnnotationResult<BoundaryEvent> {
    let bad = |reason: String| AnnotationError::MalformedLine { line: line_no, reason };
    let (time_str, rest) = line
        .split_once(|c: char| c.is_whitespace())
        .ok_or_else(|| bad("expected `time<whitespace>[codes]...`".into()))?;
    let time: f64 = time_str
        .parse()
        .map_err(|_| bad(format!("bad timestamp `{time_str}`")))?;
    if !time.is_finite() || time < 0.0 {
        return Err(bad(format!("timestamp {time} out of range")));
    }
    let rest = rest.trim_start();
    if !rest.starts_with('[') {
        return Err(bad("expected `[codes]` after timestamp".into()));
    }
    let close = rest.find(']').ok_or_else(|| bad("unterminated `[codes]`".into()))?;
    let mut categories = Vec::new();
    for code in rest[1..close].split(',') {
        let code = code.trim();
        if code.is_empty() {
            continue;
        }
        let cat = Category::from_code(code)
            .ok_or_else(|| bad(format!("unknown category code `{code}`")))?;
        if !categories.contains(&cat) {
            categories.push(cat);
        }
    }
    let mut fields = rest[close + 1..]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    Ok(BoundaryEvent {
        time,
        categories,
        fine_label: fields.next(),
        coarse_label: fields.next(),
        function_label: fields.next(),
    })
}

pub fn parse_annotation_file(path: &Path) -> AnnotationResult<AnnotationTrack> {
    parse_annotation(&std::fs::read_to_string(path)?)
}

/// Inverse of [`parse_annotation`]; times are written with 9 decimals.
pub fn serialize_annotation(track: &AnnotationTrack) -> String {
    let mut out = String::new();
    for ev in &track.events {
        let codes: Vec<&str> = ev.categories.iter().map(|c| c.code()).collect();
        out.push_str(&format!("{:.9}\t[{}]", ev.time, codes.join(", ")));
        for label in [&ev.fine_label, &ev.coarse_label, &ev.function_label] {
            match label {
                Some(text) => out.push_str(&format!(", {text}")),
                None => break,
            }
        }
        out.push('\n');
    }
    out
}

/// Parse a plain two-column `time<TAB>label` file. The first and last rows
/// become the begin/end markers; labels are kept as fine labels.
pub fn parse_two_column(text: &str) -> AnnotationResult<AnnotationTrack> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| AnnotationError::MalformedLine { line: line_no, reason };
        let (time_str, label) = line
            .split_once(|c: char| c.is_whitespace())
            .map(|(t, l)| (t, l.trim()))
            .unwrap_or((line, ""));
        let time: f64 = time_str
            .parse()
            .map_err(|_| bad(format!("bad timestamp `{time_str}`")))?;
        if !time.is_finite() || time < 0.0 {
            return Err(bad(format!("timestamp {time} out of range")));
        }
        let mut ev = BoundaryEvent::at(time, Vec::new());
        if !label.is_empty() {
            ev.fine_label = Some(label.to_string());
        }
        events.push(ev);
    }
    if let Some(first) = events.first_mut() {
        first.categories.push(Category::Begin);
    }
    if events.len() > 1 {
        let last = events.last_mut().unwrap();
        last.categories.push(Category::End);
    }
    AnnotationTrack::new(events)
}

pub fn parse_two_column_file(path: &Path) -> AnnotationResult<AnnotationTrack> {
    parse_two_column(&std::fs::read_to_string(path)?)
}

/// Two-column serialization: `time<TAB>label` (fine label, or `-`).
pub fn serialize_two_column(track: &AnnotationTrack) -> String {
    let mut out = String::new();
    for ev in &track.events {
        let label = ev.fine_label.as_deref().unwrap_or("-");
        out.push_str(&format!("{:.9}\t{label}\n", ev.time));
    }
    out
}

/// Binary frame targets: 1 at round(time * frame_rate) +/- smear for every
/// interior boundary, clamped into [0, T).
pub fn boundaries_to_frame_targets(
    track: &AnnotationTrack,
    frame_rate: f64,
    n_frames: usize,
    smear: usize,
) -> FrameTargets {
    assert!(n_frames >= 1 && frame_rate > 0.0);
    let last = n_frames as isize - 1;
    let mut values = vec![0.0f32; n_frames];
    for time in track.interior_times() {
        let center = ((time * frame_rate).round() as isize).clamp(0, last);
        let lo = (center - smear as isize).max(0) as usize;
        let hi = (center + smear as isize).min(last) as usize;
        for v in &mut values[lo..=hi] {
            *v = 1.0;
        }
    }
    FrameTargets { values, frame_rate, smear }
}

/// Rescale all event times by 1/rate (tempo rate r plays r times faster, so
/// every boundary lands at time/r).
pub fn scale_annotation_times(track: &AnnotationTrack, rate: f64) -> AnnotationTrack {
    assert!(rate > 0.0);
    let events = track
        .events
        .iter()
        .map(|ev| BoundaryEvent { time: ev.time / rate, ..ev.clone() })
        .collect();
    AnnotationTrack { events }
}

/// Category histogram and segment-duration summary over a corpus.
#[derive(Debug, Clone, Serialize)]
pub struct CorpusStats {
    pub tracks: usize,
    pub interior_events: usize,
    pub category_counts: BTreeMap<String, usize>,
    pub category_fractions: BTreeMap<String, f64>,
    pub mean_segment_secs: f64,
    pub median_segment_secs: f64,
}

pub fn corpus_stats(tracks: &[AnnotationTrack]) -> CorpusStats {
    assert!(!tracks.is_empty(), "need at least one track");
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut interior_events = 0usize;
    let mut segments = Vec::new();
    for track in tracks {
        for ev in &track.events {
            if ev.is_marker() {
                continue;
            }
            interior_events += 1;
            for cat in &ev.categories {
                *counts.entry(cat.code().to_string()).or_insert(0) += 1;
            }
        }
        for pair in track.events.windows(2) {
            segments.push(pair[1].time - pair[0].time);
        }
    }
    let total: usize = counts.values().sum();
    let fractions = counts
        .iter()
        .map(|(k, &v)| (k.clone(), if total > 0 { v as f64 / total as f64 } else { 0.0 }))
        .collect();
    segments.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = if segments.is_empty() {
        0.0
    } else {
        segments.iter().sum::<f64>() / segments.len() as f64
    };
    let median = if segments.is_empty() {
        0.0
    } else if segments.len() % 2 == 1 {
        segments[segments.len() / 2]
    } else {
        0.5 * (segments[segments.len() / 2 - 1] + segments[segments.len() / 2])
    };
    CorpusStats {
        tracks: tracks.len(),
        interior_events,
        category_counts: counts,
        category_fractions: fractions,
        mean_segment_secs: mean,
        median_segment_secs: median,
    }
}
