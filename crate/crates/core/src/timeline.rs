//! Detected events grouped into per-soundtrack tracks, plus the JSON
//! document format they are exchanged in.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed above 1 on stored correlation peaks.
pub const CORRELATION_SLACK: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum TimelineError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("malformed timeline document: {0}")]
    Malformed(String),
    #[error("duplicate track id `{0}`")]
    DuplicateTrack(String),
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> TimelineError {
    TimelineError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Impulse,
    Continuous,
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EventKind::Impulse => "impulse",
            EventKind::Continuous => "continuous",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventTime {
    Impulse { t_s: f64 },
    Continuous { t_begin_s: f64, t_end_s: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventInstance {
    pub pattern_id: String,
    pub time: EventTime,
    pub strength: f64,
    pub peak_correlation: f64,
}

impl EventInstance {
    pub fn impulse(pattern_id: impl Into<String>, t_s: f64, strength: f64, peak_correlation: f64) -> Self {
        Self {
            pattern_id: pattern_id.into(),
            time: EventTime::Impulse { t_s },
            strength,
            peak_correlation,
        }
    }

    pub fn continuous(
        pattern_id: impl Into<String>,
        t_begin_s: f64,
        t_end_s: f64,
        strength: f64,
        peak_correlation: f64,
    ) -> Self {
        Self {
            pattern_id: pattern_id.into(),
            time: EventTime::Continuous { t_begin_s, t_end_s },
            strength,
            peak_correlation,
        }
    }

    pub fn kind(&self) -> EventKind {
        match self.time {
            EventTime::Impulse { .. } => EventKind::Impulse,
            EventTime::Continuous { .. } => EventKind::Continuous,
        }
    }

    /// `t_s` for impulses, `t_begin_s` for continuous events.
    pub fn onset(&self) -> f64 {
        match self.time {
            EventTime::Impulse { t_s } => t_s,
            EventTime::Continuous { t_begin_s, .. } => t_begin_s,
        }
    }

    pub fn end(&self) -> f64 {
        match self.time {
            EventTime::Impulse { t_s } => t_s,
            EventTime::Continuous { t_end_s, .. } => t_end_s,
        }
    }

    fn validate(&self, path: &str, duration_s: f64) -> Result<(), TimelineError> {
        let check_time = |field: &str, t: f64| {
            if !t.is_finite() || t < 0.0 || t > duration_s {
                Err(schema(
                    format!("{path}.{field}"),
                    format!("{t} outside [0, {duration_s}]"),
                ))
            } else {
                Ok(())
            }
        };
        match self.time {
            EventTime::Impulse { t_s } => check_time("t", t_s)?,
            EventTime::Continuous { t_begin_s, t_end_s } => {
                check_time("t_begin", t_begin_s)?;
                check_time("t_end", t_end_s)?;
                if t_begin_s >= t_end_s {
                    return Err(schema(
                        format!("{path}.t_end"),
                        format!("t_end {t_end_s} must exceed t_begin {t_begin_s}"),
                    ));
                }
            }
        }
        if !(self.strength.is_finite() && self.strength >= 0.0) {
            return Err(schema(
                format!("{path}.strength"),
                format!("{} is not a finite non-negative number", self.strength),
            ));
        }
        let c = self.peak_correlation;
        if !(c > 0.0 && c <= 1.0 + CORRELATION_SLACK) {
            return Err(schema(
                format!("{path}.peak_correlation"),
                format!("{c} outside (0, 1]"),
            ));
        }
        if self.pattern_id.is_empty() {
            return Err(schema(format!("{path}.pattern"), "empty pattern id"));
        }
        Ok(())
    }
}

/// Canonical event order: onset, then pattern id, then end time.
pub fn event_order(a: &EventInstance, b: &EventInstance) -> std::cmp::Ordering {
    a.onset()
        .total_cmp(&b.onset())
        .then_with(|| a.pattern_id.cmp(&b.pattern_id))
        .then_with(|| a.end().total_cmp(&b.end()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: String,
    pub source_audio: Option<String>,
    pub events: Vec<EventInstance>,
}

impl Track {
    /// Builds a track with events sorted into canonical order.
    pub fn new(track_id: impl Into<String>, source_audio: Option<String>, mut events: Vec<EventInstance>) -> Self {
        events.sort_by(event_order);
        Self {
            track_id: track_id.into(),
            source_audio,
            events,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    tracks: Vec<Track>,
    duration_s: f64,
}

impl Timeline {
    /// Validates every event and orders tracks by id.
    pub fn new(mut tracks: Vec<Track>, duration_s: f64) -> Result<Self, TimelineError> {
        if !(duration_s.is_finite() && duration_s >= 0.0) {
            return Err(schema("duration_s", format!("{duration_s} is not a valid duration")));
        }
        tracks.sort_by(|a, b| a.track_id.cmp(&b.track_id));
        for pair in tracks.windows(2) {
            if pair[0].track_id == pair[1].track_id {
                return Err(TimelineError::DuplicateTrack(pair[0].track_id.clone()));
            }
        }
        for (ti, track) in tracks.iter().enumerate() {
            if track.track_id.is_empty() {
                return Err(schema(format!("tracks[{ti}].id"), "empty track id"));
            }
            for (ei, event) in track.events.iter().enumerate() {
                let path = format!("tracks[{ti}].events[{ei}]");
                event.validate(&path, duration_s)?;
                if ei > 0 && event_order(&track.events[ei - 1], event).is_gt() {
                    return Err(schema(path, "events are not sorted by onset"));
                }
            }
        }
        Ok(Self { tracks, duration_s })
    }

    pub fn empty(duration_s: f64) -> Self {
        Self {
            tracks: Vec::new(),
            duration_s,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track(&self, track_id: &str) -> Option<&Track> {
        self.tracks.iter().find(|t| t.track_id == track_id)
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn to_json(&self) -> String {
        let doc = TimelineDoc::from(self);
        let mut out = serde_json::to_string_pretty(&doc).expect("timeline documents always serialize");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, TimelineError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: TimelineDoc = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if inner.is_data() && path != "." {
                schema(path, inner.to_string())
            } else {
                TimelineError::Malformed(inner.to_string())
            }
        })?;
        doc.into_timeline()
    }
}

/// Combines per-soundtrack timelines; duration is the longest input.
pub fn merge(timelines: &[Timeline]) -> Result<Timeline, TimelineError> {
    let duration = timelines.iter().map(|t| t.duration_s).fold(0.0, f64::max);
    let tracks = timelines.iter().flat_map(|t| t.tracks.iter().cloned()).collect();
    Timeline::new(tracks, duration)
}

// Keys are declared alphabetically so documents are canonical.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimelineDoc {
    duration_s: f64,
    tracks: Vec<TrackDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackDoc {
    events: Vec<EventDoc>,
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_audio: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventDoc {
    kind: EventKind,
    pattern: String,
    peak_correlation: f64,
    strength: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_begin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_end: Option<f64>,
}

impl From<&Timeline> for TimelineDoc {
    fn from(t: &Timeline) -> Self {
        TimelineDoc {
            duration_s: t.duration_s,
            tracks: t
                .tracks
                .iter()
                .map(|track| TrackDoc {
                    id: track.track_id.clone(),
                    source_audio: track.source_audio.clone(),
                    events: track.events.iter().map(EventDoc::from).collect(),
                })
                .collect(),
        }
    }
}

impl From<&EventInstance> for EventDoc {
    fn from(e: &EventInstance) -> Self {
        let (t, t_begin, t_end) = match e.time {
            EventTime::Impulse { t_s } => (Some(t_s), None, None),
            EventTime::Continuous { t_begin_s, t_end_s } => (None, Some(t_begin_s), Some(t_end_s)),
        };
        EventDoc {
            kind: e.kind(),
            pattern: e.pattern_id.clone(),
            peak_correlation: e.peak_correlation,
            strength: e.strength,
            t,
            t_begin,
            t_end,
        }
    }
}

impl TimelineDoc {
    fn into_timeline(self) -> Result<Timeline, TimelineError> {
        let mut tracks = Vec::with_capacity(self.tracks.len());
        for (ti, track) in self.tracks.into_iter().enumerate() {
            let mut events = Vec::with_capacity(track.events.len());
            for (ei, e) in track.events.into_iter().enumerate() {
                let path = format!("tracks[{ti}].events[{ei}]");
                let require = |v: Option<f64>, field: &str| {
                    v.ok_or_else(|| schema(format!("{path}.{field}"), format!("missing for {} event", e.kind)))
                };
                let reject = |v: Option<f64>, field: &str| match v {
                    Some(_) => Err(schema(
                        format!("{path}.{field}"),
                        format!("not allowed on {} event", e.kind),
                    )),
                    None => Ok(()),
                };
                let time = match e.kind {
                    EventKind::Impulse => {
                        reject(e.t_begin, "t_begin")?;
                        reject(e.t_end, "t_end")?;
                        EventTime::Impulse {
                            t_s: require(e.t, "t")?,
                        }
                    }
                    EventKind::Continuous => {
                        reject(e.t, "t")?;
                        EventTime::Continuous {
                            t_begin_s: require(e.t_begin, "t_begin")?,
                            t_end_s: require(e.t_end, "t_end")?,
                        }
                    }
                };
                events.push(EventInstance {
                    pattern_id: e.pattern,
                    time,
                    strength: e.strength,
                    peak_correlation: e.peak_correlation,
                });
            }
            tracks.push(Track {
                track_id: track.id,
                source_audio: track.source_audio,
                events,
            });
        }
        Timeline::new(tracks, self.duration_s)
    }
}
