//! Scene configuration: which object reacts to which pattern, and how.
//!
//! A scene document names the dictionary's pattern kinds, then lists
//! objects. Each object follows one timeline track and binds pattern ids to
//! actions. [`build_animation`] turns a timeline plus a scene into sampled
//! curves and spawn lists.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use crate::synth::{
    sample, slide_segment, solve_bounce, spawn_from_impulses, squash_profile, steer_vertical, AnimationCurves,
    BallisticParams, ImpulseHit, LinearDrift, Placement, PositionProvider, ScaleProvider, SlideSegment, SpawnEvent,
    SpawnParams, SquashParams, SquashPulse, SynthError, TailMode, Vec3,
};
use crate::timeline::{EventKind, EventTime, Timeline};

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("malformed scene document: {0}")]
    Malformed(String),
    #[error("object `{object}` follows track `{track}`, which is not in the timeline")]
    MissingTrack { object: String, track: String },
    #[error("track `{track}` has a {found} event of pattern `{pattern}`, but the scene declares it {declared}")]
    KindMismatch {
        track: String,
        pattern: String,
        declared: EventKind,
        found: EventKind,
    },
    #[error("object `{object}`: {source}")]
    Synth {
        object: String,
        #[source]
        source: SynthError,
    },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> SceneError {
    SceneError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn default_fps() -> f64 {
    60.0
}
fn default_gravity() -> f64 {
    9.81
}
fn default_slide_speed() -> f64 {
    1.0
}

fn dart_placement() -> Placement {
    Placement::Lane { z: 1.0 }
}
fn laser_low_placement() -> Placement {
    Placement::Lane { z: 0.5 }
}
fn laser_high_placement() -> Placement {
    Placement::Lane { z: 1.5 }
}
fn rain_placement() -> Placement {
    Placement::UniformRect {
        x_range: [-5.0, 5.0],
        y_range: [-5.0, 5.0],
        z: 0.0,
    }
}
fn size_tenth() -> f64 {
    0.1
}
fn size_twentieth() -> f64 {
    0.05
}
fn zero() -> f64 {
    0.0
}

/// What an object does when a bound pattern fires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActionSpec {
    BounceHard,
    BounceSoft {
        #[serde(default)]
        squash: SquashParams,
    },
    Slide {
        #[serde(default = "default_slide_speed")]
        speed: f64,
        #[serde(default)]
        squash: SquashParams,
    },
    MoveUp,
    MoveDown,
    SpawnDart {
        #[serde(default = "size_tenth")]
        size_base: f64,
        #[serde(default = "size_tenth")]
        size_per_strength: f64,
        #[serde(default = "dart_placement")]
        placement: Placement,
    },
    SpawnLaserLow {
        #[serde(default = "size_tenth")]
        size_base: f64,
        #[serde(default = "zero")]
        size_per_strength: f64,
        #[serde(default = "laser_low_placement")]
        placement: Placement,
    },
    SpawnLaserHigh {
        #[serde(default = "size_tenth")]
        size_base: f64,
        #[serde(default = "zero")]
        size_per_strength: f64,
        #[serde(default = "laser_high_placement")]
        placement: Placement,
    },
    SpawnRaindrop {
        #[serde(default = "size_twentieth")]
        size_base: f64,
        #[serde(default = "zero")]
        size_per_strength: f64,
        #[serde(default = "rain_placement")]
        placement: Placement,
    },
}

impl ActionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ActionSpec::BounceHard => "bounce_hard",
            ActionSpec::BounceSoft { .. } => "bounce_soft",
            ActionSpec::Slide { .. } => "slide",
            ActionSpec::MoveUp => "move_up",
            ActionSpec::MoveDown => "move_down",
            ActionSpec::SpawnDart { .. } => "spawn_dart",
            ActionSpec::SpawnLaserLow { .. } => "spawn_laser_low",
            ActionSpec::SpawnLaserHigh { .. } => "spawn_laser_high",
            ActionSpec::SpawnRaindrop { .. } => "spawn_raindrop",
        }
    }

    /// Pattern kind this action consumes.
    pub fn event_kind(&self) -> EventKind {
        match self {
            ActionSpec::Slide { .. } | ActionSpec::MoveUp | ActionSpec::MoveDown => EventKind::Continuous,
            _ => EventKind::Impulse,
        }
    }

    /// Entity kind and parameters for spawn actions.
    pub fn spawn(&self) -> Option<(&'static str, SpawnParams)> {
        let (kind, size_base, size_per_strength, placement) = match *self {
            ActionSpec::SpawnDart {
                size_base,
                size_per_strength,
                placement,
            } => ("dart", size_base, size_per_strength, placement),
            ActionSpec::SpawnLaserLow {
                size_base,
                size_per_strength,
                placement,
            } => ("laser_low", size_base, size_per_strength, placement),
            ActionSpec::SpawnLaserHigh {
                size_base,
                size_per_strength,
                placement,
            } => ("laser_high", size_base, size_per_strength, placement),
            ActionSpec::SpawnRaindrop {
                size_base,
                size_per_strength,
                placement,
            } => ("raindrop", size_base, size_per_strength, placement),
            _ => return None,
        };
        Some((
            kind,
            SpawnParams {
                size_base,
                size_per_strength,
                placement,
            },
        ))
    }

    fn validate(&self, path: &str) -> Result<(), SceneError> {
        let check = |r: Result<(), SynthError>| r.map_err(|e| schema(path, e.to_string()));
        match self {
            ActionSpec::BounceSoft { squash } => check(squash.validate()),
            ActionSpec::Slide { speed, squash } => {
                if !speed.is_finite() {
                    return Err(schema(format!("{path}.speed"), "must be finite"));
                }
                check(squash.validate())
            }
            _ => match self.spawn() {
                Some((_, p)) => {
                    if !(p.size_base > 0.0 && p.size_base.is_finite()) {
                        return Err(schema(format!("{path}.size_base"), "must be positive"));
                    }
                    if !(p.size_per_strength >= 0.0 && p.size_per_strength.is_finite()) {
                        return Err(schema(format!("{path}.size_per_strength"), "must be non-negative"));
                    }
                    check(p.placement.validate())
                }
                None => Ok(()),
            },
        }
    }
}

/// Vertical steering driven by `move_up` / `move_down` bindings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringSpec {
    pub speed: f64,
    #[serde(default)]
    pub bounds: Option<[f64; 2]>,
    #[serde(default)]
    pub start_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub object_id: String,
    pub track_id: String,
    pub bindings: BTreeMap<String, ActionSpec>,
    /// Constant sideways velocity along +x.
    #[serde(default)]
    pub drift_m_per_s: f64,
    /// Height of the floor the object bounces on.
    #[serde(default)]
    pub floor_z: f64,
    #[serde(default)]
    pub tail: TailMode,
    #[serde(default)]
    pub steering: Option<SteeringSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    #[serde(default)]
    pub duration_override_s: Option<f64>,
    /// Kind of every pattern in the detection dictionary.
    pub patterns: BTreeMap<String, EventKind>,
    pub objects: Vec<ObjectSpec>,
}

pub(crate) fn safe_name(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(schema("fps", format!("{} must be positive", self.fps)));
        }
        if !(self.gravity > 0.0 && self.gravity.is_finite()) {
            return Err(schema("gravity", format!("{} must be positive", self.gravity)));
        }
        if let Some(d) = self.duration_override_s {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(schema("duration_override_s", format!("{d} must be non-negative")));
            }
        }
        if let Some(id) = self.patterns.keys().find(|id| id.is_empty()) {
            return Err(schema(format!("patterns.{id}"), "empty pattern id"));
        }
        let mut seen = BTreeSet::new();
        for (i, obj) in self.objects.iter().enumerate() {
            let at = format!("objects[{i}]");
            if !safe_name(&obj.object_id) {
                return Err(schema(
                    format!("{at}.object_id"),
                    format!(
                        "`{}` must be non-empty and use only letters, digits, `_`, `-` or `.`",
                        obj.object_id
                    ),
                ));
            }
            if !seen.insert(obj.object_id.as_str()) {
                return Err(schema(
                    format!("{at}.object_id"),
                    format!("duplicate object `{}`", obj.object_id),
                ));
            }
            if obj.track_id.is_empty() {
                return Err(schema(format!("{at}.track_id"), "empty track id"));
            }
            if !obj.drift_m_per_s.is_finite() {
                return Err(schema(format!("{at}.drift_m_per_s"), "must be finite"));
            }
            if !obj.floor_z.is_finite() {
                return Err(schema(format!("{at}.floor_z"), "must be finite"));
            }
            let mut steers = false;
            for (pattern, action) in &obj.bindings {
                let path = format!("{at}.bindings.{pattern}");
                let Some(&kind) = self.patterns.get(pattern) else {
                    return Err(schema(
                        path,
                        format!("pattern `{pattern}` is not declared in `patterns`"),
                    ));
                };
                if kind != action.event_kind() {
                    return Err(schema(
                        path,
                        format!(
                            "action `{}` needs a {} pattern, but `{pattern}` is {kind}",
                            action.name(),
                            action.event_kind()
                        ),
                    ));
                }
                action.validate(&path)?;
                steers |= matches!(action, ActionSpec::MoveUp | ActionSpec::MoveDown);
            }
            match obj.steering {
                None if steers => {
                    return Err(schema(
                        format!("{at}.steering"),
                        "required by move_up/move_down bindings",
                    ));
                }
                Some(s) => {
                    let path = format!("{at}.steering");
                    if !(s.speed >= 0.0 && s.speed.is_finite()) {
                        return Err(schema(format!("{path}.speed"), "must be non-negative"));
                    }
                    if let Some([lo, hi]) = s.bounds {
                        if lo > hi || !(lo..=hi).contains(&s.start_z) {
                            return Err(schema(
                                format!("{path}.bounds"),
                                format!("[{lo}, {hi}] must be ordered and contain start_z {}", s.start_z),
                            ));
                        }
                    }
                    if !s.start_z.is_finite() {
                        return Err(schema(format!("{path}.start_z"), "must be finite"));
                    }
                }
                None => {}
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("scene documents always serialize");
        out.push('\n');
        out
    }
}

/// Parses and validates a scene document; errors carry the field path.
pub fn parse_scene(text: &str) -> Result<SceneConfig, SceneError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: SceneConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_data() && path != "." {
            schema(path, inner.to_string())
        } else {
            SceneError::Malformed(inner.to_string())
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectAnimation {
    pub object_id: String,
    pub track_id: String,
    pub curves: AnimationCurves,
    pub spawns: Vec<SpawnEvent>,
    /// Timeline events that triggered an action.
    pub events_consumed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnimationOutput {
    pub duration_s: f64,
    pub fps: f64,
    pub objects: Vec<ObjectAnimation>,
}

#[derive(Serialize)]
struct SpawnDoc<'a> {
    entity_kind: &'a str,
    object: &'a str,
    position: Vec3,
    size: f64,
    t: f64,
}

#[derive(Serialize)]
struct ObjectDoc<'a> {
    curve_table: String,
    events_consumed: usize,
    frames: usize,
    id: &'a str,
    track: &'a str,
}

#[derive(Serialize)]
struct AnimationDoc<'a> {
    duration_s: f64,
    fps: f64,
    objects: Vec<ObjectDoc<'a>>,
    spawns: Vec<SpawnDoc<'a>>,
}

impl AnimationOutput {
    /// All spawns, ordered by time, then object order.
    pub fn spawns(&self) -> Vec<(&str, &SpawnEvent)> {
        let mut all: Vec<(&str, &SpawnEvent)> = self
            .objects
            .iter()
            .flat_map(|o| o.spawns.iter().map(move |s| (o.object_id.as_str(), s)))
            .collect();
        all.sort_by(|a, b| a.1.t_s.total_cmp(&b.1.t_s));
        all
    }

    /// File name of an object's curve table.
    pub fn curve_table_name(object_id: &str) -> String {
        format!("{object_id}.curve.csv")
    }

    pub fn to_json(&self) -> String {
        let doc = AnimationDoc {
            duration_s: self.duration_s,
            fps: self.fps,
            objects: self
                .objects
                .iter()
                .map(|o| ObjectDoc {
                    curve_table: Self::curve_table_name(&o.object_id),
                    events_consumed: o.events_consumed,
                    frames: o.curves.samples.len(),
                    id: &o.object_id,
                    track: &o.track_id,
                })
                .collect(),
            spawns: self
                .spawns()
                .into_iter()
                .map(|(object, s)| SpawnDoc {
                    entity_kind: &s.entity_kind,
                    object,
                    position: s.position.map(|v| v + 0.0),
                    size: s.size,
                    t: s.t_s,
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("animation documents always serialize");
        out.push('\n');
        out
    }
}

struct Offset(Vec3);

impl PositionProvider for Offset {
    fn position(&self, _: f64) -> Vec3 {
        self.0
    }

    fn max_speed(&self) -> f64 {
        0.0
    }
}

/// Spawn stream for binding `binding` of object `object`.
fn spawn_stream(object: usize, binding: usize) -> u64 {
    ((object as u64) << 32) | binding as u64
}

fn build_object(
    index: usize,
    obj: &ObjectSpec,
    timeline: &Timeline,
    cfg: &SceneConfig,
    duration_s: f64,
) -> Result<ObjectAnimation, SceneError> {
    let track = timeline.track(&obj.track_id).ok_or_else(|| SceneError::MissingTrack {
        object: obj.object_id.clone(),
        track: obj.track_id.clone(),
    })?;
    let synth_err = |source| SceneError::Synth {
        object: obj.object_id.clone(),
        source,
    };

    let mut bounce_times = Vec::new();
    let mut squashes: Vec<SquashPulse> = Vec::new();
    let mut slides: Vec<SlideSegment> = Vec::new();
    let mut up = Vec::new();
    let mut down = Vec::new();
    let mut hits: BTreeMap<&str, Vec<ImpulseHit>> = BTreeMap::new();
    let mut unbound: BTreeMap<&str, usize> = BTreeMap::new();
    let mut consumed = 0;

    for event in &track.events {
        let pattern = event.pattern_id.as_str();
        if let Some(&declared) = cfg.patterns.get(pattern) {
            if declared != event.kind() {
                return Err(SceneError::KindMismatch {
                    track: track.track_id.clone(),
                    pattern: pattern.to_string(),
                    declared,
                    found: event.kind(),
                });
            }
        }
        let Some(action) = obj.bindings.get(pattern) else {
            *unbound.entry(pattern).or_default() += 1;
            continue;
        };
        consumed += 1;
        match (action, event.time) {
            (ActionSpec::BounceHard, EventTime::Impulse { t_s }) => bounce_times.push(t_s),
            (ActionSpec::BounceSoft { squash }, EventTime::Impulse { t_s }) => {
                bounce_times.push(t_s);
                squashes.push(squash_profile(t_s, event.strength, squash).map_err(synth_err)?);
            }
            (ActionSpec::Slide { speed, squash }, EventTime::Continuous { t_begin_s, t_end_s }) => {
                slides.push(slide_segment((t_begin_s, t_end_s), *speed, squash).map_err(synth_err)?);
            }
            (ActionSpec::MoveUp, EventTime::Continuous { t_begin_s, t_end_s }) => up.push((t_begin_s, t_end_s)),
            (ActionSpec::MoveDown, EventTime::Continuous { t_begin_s, t_end_s }) => down.push((t_begin_s, t_end_s)),
            (_, EventTime::Impulse { t_s }) => hits.entry(pattern).or_default().push(ImpulseHit {
                t_s,
                strength: event.strength,
            }),
            (action, _) => {
                return Err(SceneError::KindMismatch {
                    track: track.track_id.clone(),
                    pattern: pattern.to_string(),
                    declared: action.event_kind(),
                    found: event.kind(),
                })
            }
        }
    }
    for (pattern, count) in unbound {
        log::info!(
            "object `{}`: no binding for pattern `{pattern}`, ignoring {count} event(s)",
            obj.object_id
        );
    }

    let mut positions: Vec<Box<dyn PositionProvider>> = Vec::new();
    let bounces = obj
        .bindings
        .values()
        .any(|a| matches!(a, ActionSpec::BounceHard | ActionSpec::BounceSoft { .. }));
    if bounces {
        bounce_times.sort_by(f64::total_cmp);
        bounce_times.dedup();
        let params = BallisticParams {
            g: cfg.gravity,
            rest_height: obj.floor_z,
            tail_mode: obj.tail,
        };
        positions.push(Box::new(solve_bounce(&bounce_times, &params).map_err(synth_err)?));
    } else {
        positions.push(Box::new(Offset([0.0, 0.0, obj.floor_z])));
    }
    if let Some(s) = obj.steering {
        let bounds = s.bounds.map(|[lo, hi]| (lo, hi));
        positions.push(Box::new(
            steer_vertical(&up, &down, s.speed, bounds, s.start_z).map_err(synth_err)?,
        ));
    }
    if obj.drift_m_per_s != 0.0 {
        positions.push(Box::new(LinearDrift {
            velocity: [obj.drift_m_per_s, 0.0, 0.0],
        }));
    }
    for seg in &slides {
        positions.push(Box::new(*seg));
    }

    let mut scales: Vec<&dyn ScaleProvider> = squashes.iter().map(|s| s as &dyn ScaleProvider).collect();
    scales.extend(slides.iter().map(|s| s as &dyn ScaleProvider));
    let position_refs: Vec<&dyn PositionProvider> = positions.iter().map(|p| p.as_ref()).collect();
    let curves = sample(&obj.object_id, &position_refs, &scales, duration_s, cfg.fps).map_err(synth_err)?;

    let mut spawns = Vec::new();
    for (b, (pattern, action)) in obj.bindings.iter().enumerate() {
        let Some((entity_kind, params)) = action.spawn() else {
            continue;
        };
        let events = hits.get(pattern.as_str()).map_or(&[][..], |v| v.as_slice());
        spawns.extend(
            spawn_from_impulses(events, entity_kind, &params, cfg.seed, spawn_stream(index, b)).map_err(synth_err)?,
        );
    }
    spawns.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));

    Ok(ObjectAnimation {
        object_id: obj.object_id.clone(),
        track_id: obj.track_id.clone(),
        curves,
        spawns,
        events_consumed: consumed,
    })
}

/// Curves and spawns for every object in the scene.
pub fn build_animation(timeline: &Timeline, cfg: &SceneConfig) -> Result<AnimationOutput, SceneError> {
    cfg.validate()?;
    let duration_s = cfg.duration_override_s.unwrap_or(timeline.duration_s());
    let objects = cfg
        .objects
        .par_iter()
        .enumerate()
        .map(|(i, obj)| build_object(i, obj, timeline, cfg, duration_s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AnimationOutput {
        duration_s,
        fps: cfg.fps,
        objects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeline::{EventInstance, Track};

    const THREE_PATTERNS: &str = r#"{
        "patterns": {"tick": "impulse", "pop": "impulse", "chhh": "continuous"},
        "objects": [{
            "object_id": "ball",
            "track_id": "main",
            "bindings": {
                "tick": {"kind": "bounce_hard"},
                "pop": {"kind": "bounce_soft"},
                "chhh": {"kind": "slide", "speed": 1.5}
            }
        }]
    }"#;

    fn err_path(text: &str) -> String {
        match parse_scene(text).unwrap_err() {
            SceneError::Schema { path, .. } => path,
            other => panic!("expected a schema error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_scene_gets_defaults() {
        let cfg = parse_scene(
            r#"{"patterns": {"tick": "impulse"},
                "objects": [{"object_id": "b", "track_id": "t", "bindings": {"tick": {"kind": "bounce_hard"}}}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.fps, 60.0);
        assert_eq!(cfg.gravity, 9.81);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.objects[0].tail, TailMode::Rest);
        assert_eq!(cfg.objects[0].floor_z, 0.0);
    }

    #[test]
    fn three_pattern_scene_round_trips() {
        let cfg = parse_scene(THREE_PATTERNS).unwrap();
        let text = cfg.to_json();
        let again = parse_scene(&text).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_json(), text);
        assert!(text.contains("\"strength_clamp\": 2.0"));
        assert_eq!(
            cfg.objects[0].bindings["pop"],
            ActionSpec::BounceSoft {
                squash: SquashParams::default()
            }
        );
    }

    #[test]
    fn errors_name_their_field() {
        let slide_on_impulse =
            THREE_PATTERNS.replace(r#""tick": {"kind": "bounce_hard"}"#, r#""tick": {"kind": "slide"}"#);
        assert_eq!(err_path(&slide_on_impulse), "objects[0].bindings.tick");

        let unknown = THREE_PATTERNS.replace("bounce_hard", "cartwheel");
        assert!(err_path(&unknown).starts_with("objects[0].bindings.tick"));

        let missing = THREE_PATTERNS.replace(r#""track_id": "main","#, "");
        assert_eq!(err_path(&missing), "objects[0]");

        let undeclared = THREE_PATTERNS.replace(r#""pop": "impulse", "#, "");
        assert_eq!(err_path(&undeclared), "objects[0].bindings.pop");

        let bad_fps = THREE_PATTERNS.replacen('{', r#"{"fps": 0,"#, 1);
        assert_eq!(err_path(&bad_fps), "fps");

        let deep = THREE_PATTERNS.replace(
            r#"{"kind": "bounce_soft"}"#,
            r#"{"kind": "bounce_soft", "squash": {"amplitude": 0.9}}"#,
        );
        assert_eq!(err_path(&deep), "objects[0].bindings.pop");

        let steer = THREE_PATTERNS.replace(r#""kind": "slide", "speed": 1.5"#, r#""kind": "move_up""#);
        assert_eq!(err_path(&steer), "objects[0].steering");

        assert!(matches!(parse_scene("{"), Err(SceneError::Malformed(_))));
    }

    fn laser_timeline() -> Timeline {
        let laser = Track::new(
            "laser",
            None,
            vec![
                EventInstance::impulse("peww", 0.5, 0.8, 0.9),
                EventInstance::impulse("paww", 1.25, 1.1, 0.8),
                EventInstance::impulse("peww", 2.0, 0.3, 0.7),
            ],
        );
        let hero = Track::new(
            "hero",
            None,
            vec![
                EventInstance::impulse("tick", 1.0, 1.0, 0.95),
                EventInstance::impulse("tick", 2.0, 1.0, 0.95),
                EventInstance::continuous("chhh", 2.5, 3.0, 0.4, 0.7),
            ],
        );
        Timeline::new(vec![laser, hero], 4.0).unwrap()
    }

    const LASER_SCENE: &str = r#"{
        "fps": 100,
        "patterns": {"peww": "impulse", "paww": "impulse", "tick": "impulse", "chhh": "continuous"},
        "objects": [
            {"object_id": "gun", "track_id": "laser", "bindings": {
                "peww": {"kind": "spawn_laser_low"}, "paww": {"kind": "spawn_laser_high"}}},
            {"object_id": "hero", "track_id": "hero", "bindings": {
                "tick": {"kind": "bounce_hard"}, "chhh": {"kind": "slide", "speed": 2.0}}}
        ]
    }"#;

    #[test]
    fn laser_scene_keeps_event_times() {
        let cfg = parse_scene(LASER_SCENE).unwrap();
        let out = build_animation(&laser_timeline(), &cfg).unwrap();
        let spawns = out.spawns();
        let times: Vec<f64> = spawns.iter().map(|(_, s)| s.t_s).collect();
        assert_eq!(times, [0.5, 1.25, 2.0]);
        assert_eq!(spawns[1].1.entity_kind, "laser_high");
        assert_eq!(spawns[1].1.position, [0.0, 0.0, 1.5]);

        let hero = &out.objects[1];
        assert_eq!(hero.events_consumed, 3);
        let z = |t: f64| hero.curves.samples[(t * 100.0).round() as usize].position[2];
        assert!(z(1.0).abs() < 1e-9 && z(2.0).abs() < 1e-9);
        assert!((z(1.5) - 1.22625).abs() < 1e-9);
        let x_end = hero.curves.samples.last().unwrap().position[0];
        assert!((x_end - 1.0).abs() < 1e-9);
        assert!(hero.curves.samples[275].scale[2] < 1.0);
        assert_eq!(hero.curves.samples.len(), 401);
    }

    #[test]
    fn empty_timeline_rests() {
        let cfg = parse_scene(LASER_SCENE).unwrap();
        let empty = Timeline::new(
            vec![Track::new("laser", None, vec![]), Track::new("hero", None, vec![])],
            2.0,
        )
        .unwrap();
        let out = build_animation(&empty, &cfg).unwrap();
        assert!(out.spawns().is_empty());
        for o in &out.objects {
            assert!(o
                .curves
                .samples
                .iter()
                .all(|s| s.position == [0.0; 3] && s.scale == [1.0; 3]));
        }
    }

    #[test]
    fn missing_track_and_kind_mismatch() {
        let cfg = parse_scene(LASER_SCENE).unwrap();
        let only_laser = Timeline::new(vec![Track::new("laser", None, vec![])], 1.0).unwrap();
        assert!(matches!(
            build_animation(&only_laser, &cfg),
            Err(SceneError::MissingTrack { .. })
        ));
        let wrong = Timeline::new(
            vec![
                Track::new("laser", None, vec![]),
                Track::new(
                    "hero",
                    None,
                    vec![EventInstance::continuous("tick", 0.1, 0.5, 1.0, 0.9)],
                ),
            ],
            1.0,
        )
        .unwrap();
        assert!(matches!(
            build_animation(&wrong, &cfg),
            Err(SceneError::KindMismatch { .. })
        ));
    }

    #[test]
    fn rain_is_reproducible_per_seed() {
        let events = (0..10)
            .map(|i| EventInstance::impulse("knock", 0.3 * i as f64 + 0.1, 1.0, 0.9))
            .collect();
        let timeline = Timeline::new(vec![Track::new("rain", None, events)], 3.5).unwrap();
        let scene = |seed: u64| {
            parse_scene(&format!(
                r#"{{"seed": {seed}, "patterns": {{"knock": "impulse"}},
                    "objects": [{{"object_id": "sky", "track_id": "rain",
                                  "bindings": {{"knock": {{"kind": "spawn_raindrop"}}}}}}]}}"#
            ))
            .unwrap()
        };
        let a = build_animation(&timeline, &scene(42)).unwrap();
        let b = build_animation(&timeline, &scene(42)).unwrap();
        let c = build_animation(&timeline, &scene(7)).unwrap();
        assert_eq!(a.spawns().len(), 10);
        assert_eq!(a.to_json(), b.to_json());
        assert_ne!(a.to_json(), c.to_json());
        assert_eq!(a.objects[0].curves, c.objects[0].curves);
        let spots: BTreeSet<String> = a.spawns().iter().map(|(_, s)| format!("{:?}", s.position)).collect();
        assert_eq!(spots.len(), 10);
    }
}
