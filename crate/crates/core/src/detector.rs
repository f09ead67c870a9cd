//! Pattern detection: turns a recorded sequence and a dictionary of sound
//! patterns into a single-track [`Timeline`].
//!
//! Impulse patterns are located at local maxima of their normalized
//! cross-correlation, then a greedy non-maximum suppression across all
//! patterns keeps the strongest candidate inside each pattern window.
//! Continuous patterns are segmented where the smoothed correlation envelope
//! stays above a threshold. Every surviving event gets a strength: the RMS
//! ratio of the matching excerpt of the sequence to its reference pattern.

use std::cmp::Ordering;

use rayon::prelude::*;
use thiserror::Error;

use crate::audio::{resample, AudioClip, AudioError};
use crate::signal::{
    find_local_maxima, moving_average, moving_max, normalized_cross_correlate, CorrelationTrace, SignalError,
};
use crate::timeline::{EventInstance, EventKind, EventTime, Timeline, TimelineError, Track};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error("pattern dictionary is empty")]
    EmptyDictionary,
    #[error("pattern id `{0}` appears more than once")]
    DuplicatePattern(String),
    #[error("pattern `{0}` has zero energy")]
    SilentPattern(String),
    #[error("pattern id must not be empty")]
    EmptyPatternId,
    #[error("pattern `{id}` is {actual}, expected {expected}")]
    WrongKind {
        id: String,
        expected: EventKind,
        actual: EventKind,
    },
    #[error("candidate refers to unknown pattern `{0}`")]
    UnknownPattern(String),
    #[error("event window [{begin_s}, {end_s}] s lies outside the {duration_s} s signal")]
    EventOutsideSignal { begin_s: f64, end_s: f64, duration_s: f64 },
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
}

/// A dictionary entry: reference clip, event kind and identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundPattern {
    id: String,
    clip: AudioClip,
    kind: EventKind,
}

impl SoundPattern {
    pub fn new(id: impl Into<String>, clip: AudioClip, kind: EventKind) -> Result<Self, DetectError> {
        let id = id.into();
        if id.is_empty() {
            return Err(DetectError::EmptyPatternId);
        }
        if clip.samples().iter().all(|&s| s == 0.0) {
            return Err(DetectError::SilentPattern(id));
        }
        Ok(Self { id, clip, kind })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn clip(&self) -> &AudioClip {
        &self.clip
    }

    pub fn kind(&self) -> EventKind {
        self.kind
    }

    /// The pattern length Δt, used for suppression and instance windows.
    pub fn duration_s(&self) -> f64 {
        self.clip.duration_s()
    }

    fn at_rate(&self, sample_rate_hz: u32) -> Result<Self, DetectError> {
        if self.clip.sample_rate_hz() == sample_rate_hz {
            return Ok(self.clone());
        }
        Self::new(self.id.clone(), resample(&self.clip, sample_rate_hz)?, self.kind)
    }

    fn expect_kind(&self, expected: EventKind) -> Result<(), DetectError> {
        if self.kind != expected {
            return Err(DetectError::WrongKind {
                id: self.id.clone(),
                expected,
                actual: self.kind,
            });
        }
        Ok(())
    }
}

/// Non-empty set of patterns with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternDictionary {
    patterns: Vec<SoundPattern>,
}

impl PatternDictionary {
    pub fn new(patterns: Vec<SoundPattern>) -> Result<Self, DetectError> {
        if patterns.is_empty() {
            return Err(DetectError::EmptyDictionary);
        }
        for (i, p) in patterns.iter().enumerate() {
            if patterns[..i].iter().any(|q| q.id == p.id) {
                return Err(DetectError::DuplicatePattern(p.id.clone()));
            }
        }
        Ok(Self { patterns })
    }

    pub fn patterns(&self) -> &[SoundPattern] {
        &self.patterns
    }

    pub fn get(&self, id: &str) -> Option<&SoundPattern> {
        self.patterns.iter().find(|p| p.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Minimum normalized correlation for an impulse candidate.
    pub impulse_threshold: f64,
    /// Minimum smoothed correlation envelope inside a continuous event.
    pub continuous_threshold: f64,
    pub continuous_min_duration_s: f64,
    /// Cross-pattern non-maximum suppression of impulse candidates.
    pub suppression: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            impulse_threshold: 0.5,
            continuous_threshold: 0.5,
            continuous_min_duration_s: 0.15,
            suppression: true,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        for (name, v) in [
            ("impulse_threshold", self.impulse_threshold),
            ("continuous_threshold", self.continuous_threshold),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(DetectError::InvalidConfig(format!("{name} = {v} is not in (0, 1]")));
            }
        }
        if !(self.continuous_min_duration_s >= 0.0 && self.continuous_min_duration_s.is_finite()) {
            return Err(DetectError::InvalidConfig(format!(
                "continuous_min_duration_s = {} must be finite and non-negative",
                self.continuous_min_duration_s
            )));
        }
        Ok(())
    }
}

/// An impulse correlation peak before cross-pattern suppression.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub pattern_id: String,
    /// Onset of the pattern inside the sequence.
    pub lag_time_s: f64,
    pub correlation_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousInterval {
    pub t_begin_s: f64,
    pub t_end_s: f64,
    pub peak_correlation: f64,
}

pub fn detect_impulse_candidates(
    s: &AudioClip,
    p: &SoundPattern,
    cfg: &DetectorConfig,
) -> Result<Vec<Candidate>, DetectError> {
    p.expect_kind(EventKind::Impulse)?;
    let trace = normalized_cross_correlate(s, &p.clip)?;
    Ok(impulse_candidates_from(&trace, p, cfg))
}

fn impulse_candidates_from(trace: &CorrelationTrace, p: &SoundPattern, cfg: &DetectorConfig) -> Vec<Candidate> {
    find_local_maxima(trace, cfg.impulse_threshold)
        .into_iter()
        .map(|m| Candidate {
            pattern_id: p.id.clone(),
            lag_time_s: trace.lag_to_seconds(m.lag),
            correlation_value: m.value,
        })
        .collect()
}

/// Strongest first; ties go to the earlier candidate, then the lower id.
fn candidate_rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.correlation_value
        .total_cmp(&a.correlation_value)
        .then_with(|| a.lag_time_s.total_cmp(&b.lag_time_s))
        .then_with(|| a.pattern_id.cmp(&b.pattern_id))
}

/// Greedy non-maximum suppression across patterns.
///
/// Candidates are visited strongest first. One is kept unless an already
/// kept candidate lies within half a pattern length of it, measured with
/// the longer of the two patterns. Using either window alone lets the
/// correlation sidelobes of a long, suppressed pattern survive next to a
/// short kept one. The result is sorted by time.
pub fn suppress(candidates: &[Candidate], dictionary: &PatternDictionary) -> Result<Vec<Candidate>, DetectError> {
    let mut ranked: Vec<(&Candidate, f64)> = candidates
        .iter()
        .map(|c| {
            dictionary
                .get(&c.pattern_id)
                .map(|p| (c, p.duration_s()))
                .ok_or_else(|| DetectError::UnknownPattern(c.pattern_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    ranked.sort_by(|a, b| candidate_rank(a.0, b.0));

    let mut kept: Vec<(&Candidate, f64)> = Vec::new();
    for (c, dt) in ranked {
        let blocked = kept
            .iter()
            .any(|(k, kdt)| (c.lag_time_s - k.lag_time_s).abs() <= kdt.max(dt) / 2.0);
        if !blocked {
            kept.push((c, dt));
        }
    }
    let mut out: Vec<Candidate> = kept.into_iter().map(|(c, _)| c.clone()).collect();
    out.sort_by(|a, b| {
        a.lag_time_s
            .total_cmp(&b.lag_time_s)
            .then_with(|| a.pattern_id.cmp(&b.pattern_id))
    });
    Ok(out)
}

/// Segments the sequence into intervals where the continuous pattern keeps
/// matching.
///
/// The raw correlation of an audio pattern oscillates around zero as the lag
/// slides within a sustained instance, so its plain mean never reaches a
/// useful threshold. The trace is first turned into an upper envelope (a
/// running maximum over one pattern length), then smoothed by a boxcar of the
/// same length. Lag runs above the threshold are reported shifted by half a
/// pattern, since the envelope widens the matched onset range by that much
/// on each side.
pub fn detect_continuous_events(
    s: &AudioClip,
    p: &SoundPattern,
    cfg: &DetectorConfig,
) -> Result<Vec<ContinuousInterval>, DetectError> {
    p.expect_kind(EventKind::Continuous)?;
    let trace = normalized_cross_correlate(s, &p.clip)?;
    Ok(continuous_intervals_from(&trace, p, cfg, s.duration_s()))
}

fn continuous_intervals_from(
    trace: &CorrelationTrace,
    p: &SoundPattern,
    cfg: &DetectorConfig,
    duration_s: f64,
) -> Vec<ContinuousInterval> {
    let dt = p.duration_s();
    let envelope = moving_max(trace, dt);
    let smoothed = moving_average(&envelope, dt);
    let mut out = Vec::new();
    let v = &smoothed.values;
    let mut i = 0;
    while i < v.len() {
        if v[i] <= cfg.continuous_threshold {
            i += 1;
            continue;
        }
        let start = i;
        while i < v.len() && v[i] > cfg.continuous_threshold {
            i += 1;
        }
        let t_begin_s = (smoothed.lag_to_seconds(start) + dt / 2.0).min(duration_s);
        let t_end_s = (smoothed.lag_to_seconds(i) + dt / 2.0).min(duration_s);
        let peak = envelope.values[start..i].iter().cloned().fold(f64::MIN, f64::max);
        if t_end_s > t_begin_s && t_end_s - t_begin_s >= cfg.continuous_min_duration_s {
            out.push(ContinuousInterval {
                t_begin_s,
                t_end_s,
                peak_correlation: peak,
            });
        }
    }
    out
}

/// Copies the part of `s` that belongs to an event.
///
/// Impulse windows are centered on `t_s` and span `pattern_duration_s`;
/// continuous windows span `[t_begin_s, t_end_s]`. Windows are clamped to
/// the signal; an event time outside the signal is an error.
pub fn extract_instance(s: &AudioClip, event: &EventTime, pattern_duration_s: f64) -> Result<AudioClip, DetectError> {
    let (begin_s, end_s, anchor_ok) = match *event {
        EventTime::Impulse { t_s } => (
            t_s - pattern_duration_s / 2.0,
            t_s + pattern_duration_s / 2.0,
            (0.0..=s.duration_s()).contains(&t_s),
        ),
        EventTime::Continuous { t_begin_s, t_end_s } => (
            t_begin_s,
            t_end_s,
            t_begin_s >= 0.0 && t_end_s <= s.duration_s() && t_begin_s <= t_end_s,
        ),
    };
    if !anchor_ok {
        return Err(DetectError::EventOutsideSignal {
            begin_s,
            end_s,
            duration_s: s.duration_s(),
        });
    }
    let sr = s.sample_rate_hz() as f64;
    let to_index = |t: f64| (t * sr).round().max(0.0) as usize;
    Ok(s.slice(to_index(begin_s), to_index(end_s)))
}

/// RMS ratio of an instance to its reference pattern.
pub fn strength(instance: &AudioClip, p: &SoundPattern) -> Result<f64, DetectError> {
    let reference = crate::signal::energy(&p.clip);
    if reference <= 0.0 {
        return Err(DetectError::SilentPattern(p.id.clone()));
    }
    Ok((crate::signal::energy(instance) / reference).sqrt())
}

enum PatternHits {
    Impulse(Vec<Candidate>),
    Continuous(Vec<ContinuousInterval>),
}

/// Runs the full detection pipeline and returns a one-track timeline.
///
/// Patterns are resampled to the sequence rate first. Impulse events carry
/// the pattern onset as their time; their strength window is centered half a
/// pattern later, on the middle of the matched excerpt.
pub fn detect(
    track_id: &str,
    s: &AudioClip,
    dictionary: &PatternDictionary,
    cfg: &DetectorConfig,
) -> Result<Timeline, DetectError> {
    cfg.validate()?;
    let aligned: Vec<SoundPattern> = dictionary
        .patterns()
        .iter()
        .map(|p| p.at_rate(s.sample_rate_hz()))
        .collect::<Result<_, _>>()?;
    let aligned_dict = PatternDictionary::new(aligned)?;

    let hits: Vec<PatternHits> = aligned_dict
        .patterns()
        .par_iter()
        .map(|p| -> Result<PatternHits, DetectError> {
            let trace = normalized_cross_correlate(s, &p.clip)?;
            Ok(match p.kind {
                EventKind::Impulse => PatternHits::Impulse(impulse_candidates_from(&trace, p, cfg)),
                EventKind::Continuous => {
                    PatternHits::Continuous(continuous_intervals_from(&trace, p, cfg, s.duration_s()))
                }
            })
        })
        .collect::<Result<_, _>>()?;

    let mut candidates = Vec::new();
    let mut events = Vec::new();
    for (p, hit) in aligned_dict.patterns().iter().zip(hits) {
        match hit {
            PatternHits::Impulse(c) => candidates.extend(c),
            PatternHits::Continuous(intervals) => {
                for iv in intervals {
                    let time = EventTime::Continuous {
                        t_begin_s: iv.t_begin_s,
                        t_end_s: iv.t_end_s,
                    };
                    let instance = extract_instance(s, &time, p.duration_s())?;
                    events.push(EventInstance {
                        pattern_id: p.id.clone(),
                        time,
                        strength: strength(&instance, p)?,
                        peak_correlation: iv.peak_correlation,
                    });
                }
            }
        }
    }
    let accepted = if cfg.suppression {
        suppress(&candidates, &aligned_dict)?
    } else {
        candidates
    };
    for c in accepted {
        let p = aligned_dict
            .get(&c.pattern_id)
            .ok_or_else(|| DetectError::UnknownPattern(c.pattern_id.clone()))?;
        let center = EventTime::Impulse {
            t_s: (c.lag_time_s + p.duration_s() / 2.0).min(s.duration_s()),
        };
        let instance = extract_instance(s, &center, p.duration_s())?;
        events.push(EventInstance::impulse(
            c.pattern_id.clone(),
            c.lag_time_s,
            strength(&instance, p)?,
            c.correlation_value,
        ));
    }
    Ok(Timeline::new(vec![Track::new(track_id, None, events)], s.duration_s())?)
}

/// Normalized correlation trace of every pattern, in dictionary order.
pub fn correlation_traces(
    s: &AudioClip,
    dictionary: &PatternDictionary,
) -> Result<Vec<(String, CorrelationTrace)>, DetectError> {
    dictionary
        .patterns()
        .par_iter()
        .map(|p| {
            let p = p.at_rate(s.sample_rate_hz())?;
            Ok((p.id.clone(), normalized_cross_correlate(s, &p.clip)?))
        })
        .collect()
}
