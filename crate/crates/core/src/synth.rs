//! Procedural animation driven by event times.
//!
//! Motion is built from small providers that are evaluated in closed form:
//! floor bounces, squash pulses, slides, vertical steering and drift.
//! [`sample`] sums the position providers and multiplies the scale
//! providers on a uniform frame grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub type Vec3 = [f64; 3];

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("event time {value} at index {index} is not finite and non-negative")]
    InvalidTime { index: usize, value: f64 },
    #[error("event times must be strictly increasing (index {index})")]
    UnsortedTimes { index: usize },
    #[error("squash factor {0} would flatten the object (must stay below 1)")]
    DegenerateSquash(f64),
    #[error("up interval [{up_begin}, {up_end}] overlaps down interval [{down_begin}, {down_end}]")]
    SteerOverlap {
        up_begin: f64,
        up_end: f64,
        down_begin: f64,
        down_end: f64,
    },
    #[error("interval [{0}, {1}] is empty or not finite")]
    InvalidInterval(f64, f64),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidParams(msg.into())
}

pub trait PositionProvider: Send + Sync {
    fn position(&self, t: f64) -> Vec3;
    /// Upper bound on the speed of this contribution.
    fn max_speed(&self) -> f64;
}

pub trait ScaleProvider: Send + Sync {
    fn scale(&self, t: f64) -> Vec3;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    /// Stay on the floor after the last impact.
    #[default]
    Rest,
    /// One more hop as long as the last interval, then rest.
    RepeatLastInterval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallisticParams {
    pub g: f64,
    /// Floor height; impacts land here.
    pub rest_height: f64,
    pub tail_mode: TailMode,
}

impl Default for BallisticParams {
    fn default() -> Self {
        Self {
            g: 9.81,
            rest_height: 0.0,
            tail_mode: TailMode::Rest,
        }
    }
}

/// Height of a ball that touches the floor exactly at each event time.
///
/// Between impacts `t_k` and `t_{k+1}` the ball leaves the floor with
/// `v_z = g (t_{k+1} - t_k) / 2`, which puts the next landing at `t_{k+1}`:
/// `z(t) = g τ (Δ - τ) / 2` with `τ = t - t_k`. Before the first impact it
/// falls from rest at height `g t_0² / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BounceTrajectory {
    times: Vec<f64>,
    params: BallisticParams,
    /// Length of the extra hop after the last impact, if any.
    tail_interval: Option<f64>,
}

pub fn solve_bounce(event_times: &[f64], params: &BallisticParams) -> Result<BounceTrajectory, SynthError> {
    if !(params.g > 0.0 && params.g.is_finite()) {
        return Err(invalid(format!("gravity {} must be positive", params.g)));
    }
    if !params.rest_height.is_finite() {
        return Err(invalid("rest height must be finite"));
    }
    for (index, &value) in event_times.iter().enumerate() {
        if !(value.is_finite() && value >= 0.0) {
            return Err(SynthError::InvalidTime { index, value });
        }
        if index > 0 && value <= event_times[index - 1] {
            return Err(SynthError::UnsortedTimes { index });
        }
    }
    let tail_interval = match (params.tail_mode, event_times) {
        (TailMode::Rest, _) | (_, []) => None,
        // a lone impact bounces back to its release height
        (TailMode::RepeatLastInterval, [t0]) => Some(2.0 * t0).filter(|&l| l > 0.0),
        (TailMode::RepeatLastInterval, [.., a, b]) => Some(b - a),
    };
    Ok(BounceTrajectory {
        times: event_times.to_vec(),
        params: *params,
        tail_interval,
    })
}

impl BounceTrajectory {
    pub fn event_times(&self) -> &[f64] {
        &self.times
    }

    /// Height above the floor plane at time `t`.
    pub fn z(&self, t: f64) -> f64 {
        let g = self.params.g;
        let floor = self.params.rest_height;
        let Some(&first) = self.times.first() else {
            return floor;
        };
        if t < first {
            return floor + 0.5 * g * (first * first - t * t);
        }
        // index of the last impact at or before t
        let k = self.times.partition_point(|&tk| tk <= t) - 1;
        let start = self.times[k];
        let interval = match self.times.get(k + 1) {
            Some(next) => next - start,
            None => match self.tail_interval {
                Some(l) if t <= start + l => l,
                _ => return floor,
            },
        };
        let tau = t - start;
        floor + 0.5 * g * tau * (interval - tau)
    }

    /// Launch velocity right after impact `k`.
    pub fn launch_speed(&self, k: usize) -> Option<f64> {
        let start = *self.times.get(k)?;
        let interval = match self.times.get(k + 1) {
            Some(next) => next - start,
            None => self.tail_interval.unwrap_or(0.0),
        };
        Some(0.5 * self.params.g * interval)
    }
}

impl PositionProvider for BounceTrajectory {
    fn position(&self, t: f64) -> Vec3 {
        [0.0, 0.0, self.z(t)]
    }

    fn max_speed(&self) -> f64 {
        let g = self.params.g;
        let drop = self.times.first().map_or(0.0, |t0| g * t0);
        let hops = self
            .times
            .windows(2)
            .map(|w| 0.5 * g * (w[1] - w[0]))
            .chain(self.tail_interval.map(|l| 0.5 * g * l))
            .fold(0.0, f64::max);
        drop.max(hops)
    }
}

fn default_squash_amplitude() -> f64 {
    0.3
}
fn default_squash_duration() -> f64 {
    0.15
}
fn default_true() -> bool {
    true
}
fn default_strength_clamp() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquashParams {
    #[serde(default = "default_squash_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_squash_duration")]
    pub duration_s: f64,
    #[serde(default = "default_true")]
    pub strength_scaling: bool,
    #[serde(default = "default_strength_clamp")]
    pub strength_clamp: f64,
}

impl Default for SquashParams {
    fn default() -> Self {
        Self {
            amplitude: default_squash_amplitude(),
            duration_s: default_squash_duration(),
            strength_scaling: true,
            strength_clamp: default_strength_clamp(),
        }
    }
}

impl SquashParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..1.0).contains(&self.amplitude) {
            return Err(invalid(format!("squash amplitude {} outside [0, 1)", self.amplitude)));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(invalid(format!("squash duration {} must be positive", self.duration_s)));
        }
        if !(self.strength_clamp >= 0.0 && self.strength_clamp.is_finite()) {
            return Err(invalid(format!(
                "strength clamp {} must be non-negative",
                self.strength_clamp
            )));
        }
        if self.strength_scaling && self.amplitude * self.strength_clamp >= 1.0 {
            return Err(invalid(format!(
                "amplitude {} times strength clamp {} must stay below 1",
                self.amplitude, self.strength_clamp
            )));
        }
        Ok(())
    }
}

/// Volume-preserving scale for a vertical squash factor `1 - depth`.
fn squash_scale(depth: f64) -> Vec3 {
    let sz = 1.0 - depth;
    let side = 1.0 / sz.sqrt();
    [side, side, sz]
}

/// Cosine-bump squash centered on an impact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquashPulse {
    pub impact_t: f64,
    /// Peak vertical compression; the height scale bottoms out at `1 - depth`.
    pub depth: f64,
    pub duration_s: f64,
}

pub fn squash_profile(impact_t: f64, strength: f64, params: &SquashParams) -> Result<SquashPulse, SynthError> {
    if !(strength >= 0.0 && strength.is_finite()) {
        return Err(invalid(format!("strength {strength} must be non-negative")));
    }
    if !(0.0..1.0).contains(&params.amplitude) || !(params.duration_s > 0.0 && params.duration_s.is_finite()) {
        return Err(invalid("squash amplitude must lie in [0, 1) and duration be positive"));
    }
    let factor = if params.strength_scaling {
        strength.min(params.strength_clamp)
    } else {
        1.0
    };
    let depth = params.amplitude * factor;
    if depth >= 1.0 {
        return Err(SynthError::DegenerateSquash(depth));
    }
    Ok(SquashPulse {
        impact_t,
        depth,
        duration_s: params.duration_s,
    })
}

impl ScaleProvider for SquashPulse {
    fn scale(&self, t: f64) -> Vec3 {
        let offset = t - self.impact_t;
        if offset.abs() > self.duration_s / 2.0 {
            return [1.0; 3];
        }
        let w = 0.5 * (1.0 + (2.0 * PI * offset / self.duration_s).cos());
        squash_scale(self.depth * w)
    }
}

/// Sideways slide along +x with a held squash while the interval lasts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlideSegment {
    pub t_begin: f64,
    pub t_end: f64,
    pub speed: f64,
    pub depth: f64,
}

/// Ease-in/out length of a slide squash.
const SLIDE_EASE_S: f64 = 0.05;

pub fn slide_segment(interval: (f64, f64), speed: f64, squash: &SquashParams) -> Result<SlideSegment, SynthError> {
    let (t_begin, t_end) = interval;
    if !(t_begin.is_finite() && t_end.is_finite() && t_begin < t_end) {
        return Err(SynthError::InvalidInterval(t_begin, t_end));
    }
    if !speed.is_finite() {
        return Err(invalid("slide speed must be finite"));
    }
    if !(0.0..1.0).contains(&squash.amplitude) {
        return Err(SynthError::DegenerateSquash(squash.amplitude));
    }
    Ok(SlideSegment {
        t_begin,
        t_end,
        speed,
        depth: squash.amplitude,
    })
}

impl SlideSegment {
    fn ease(&self, t: f64) -> f64 {
        if t <= self.t_begin || t >= self.t_end {
            return 0.0;
        }
        let ramp = SLIDE_EASE_S.min((self.t_end - self.t_begin) / 4.0);
        let edge = (t - self.t_begin).min(self.t_end - t);
        if edge >= ramp {
            1.0
        } else {
            0.5 * (1.0 - (PI * edge / ramp).cos())
        }
    }
}

impl PositionProvider for SlideSegment {
    fn position(&self, t: f64) -> Vec3 {
        let travelled = (t - self.t_begin).clamp(0.0, self.t_end - self.t_begin);
        [self.speed * travelled, 0.0, 0.0]
    }

    fn max_speed(&self) -> f64 {
        self.speed.abs()
    }
}

impl ScaleProvider for SlideSegment {
    fn scale(&self, t: f64) -> Vec3 {
        squash_scale(self.depth * self.ease(t))
    }
}

/// Vertical position integrated from up/down intervals, clamped to bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct VerticalSteer {
    /// `(segment start, height at start, rate)`, sorted by start.
    knots: Vec<(f64, f64, f64)>,
    start_z: f64,
    speed: f64,
    bounds: Option<(f64, f64)>,
}

fn union(mut intervals: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (b, e) in intervals {
        match out.last_mut() {
            Some(last) if b <= last.1 => last.1 = last.1.max(e),
            _ => out.push((b, e)),
        }
    }
    out
}

pub fn steer_vertical(
    intervals_up: &[(f64, f64)],
    intervals_down: &[(f64, f64)],
    speed: f64,
    bounds: Option<(f64, f64)>,
    start_z: f64,
) -> Result<VerticalSteer, SynthError> {
    if !(speed.is_finite() && speed >= 0.0) {
        return Err(invalid(format!("steering speed {speed} must be non-negative")));
    }
    if let Some((lo, hi)) = bounds {
        if lo > hi || !(lo..=hi).contains(&start_z) {
            return Err(invalid(format!("start height {start_z} outside bounds [{lo}, {hi}]")));
        }
    }
    for &(b, e) in intervals_up.iter().chain(intervals_down) {
        if !(b.is_finite() && e.is_finite() && b < e) {
            return Err(SynthError::InvalidInterval(b, e));
        }
    }
    let up = union(intervals_up.to_vec());
    let down = union(intervals_down.to_vec());
    for &(ub, ue) in &up {
        for &(db, de) in &down {
            if ub.max(db) < ue.min(de) {
                return Err(SynthError::SteerOverlap {
                    up_begin: ub,
                    up_end: ue,
                    down_begin: db,
                    down_end: de,
                });
            }
        }
    }
    let clamp = |z: f64| bounds.map_or(z, |(lo, hi)| z.clamp(lo, hi));
    let mut segments: Vec<(f64, f64, f64)> = up
        .iter()
        .map(|&(b, e)| (b, e, speed))
        .chain(down.iter().map(|&(b, e)| (b, e, -speed)))
        .collect();
    segments.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut knots = Vec::with_capacity(segments.len() * 2);
    let mut z = start_z;
    for (b, e, rate) in segments {
        knots.push((b, z, rate));
        z = clamp(z + rate * (e - b));
        knots.push((e, z, 0.0));
    }
    Ok(VerticalSteer {
        knots,
        start_z,
        speed,
        bounds,
    })
}

impl VerticalSteer {
    pub fn z(&self, t: f64) -> f64 {
        let k = self.knots.partition_point(|knot| knot.0 <= t);
        let Some(&(start, z0, rate)) = k.checked_sub(1).and_then(|i| self.knots.get(i)) else {
            return self.start_z;
        };
        let z = z0 + rate * (t - start);
        self.bounds.map_or(z, |(lo, hi)| z.clamp(lo, hi))
    }
}

impl PositionProvider for VerticalSteer {
    fn position(&self, t: f64) -> Vec3 {
        [0.0, 0.0, self.z(t)]
    }

    fn max_speed(&self) -> f64 {
        self.speed
    }
}

/// Constant-velocity offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDrift {
    pub velocity: Vec3,
}

impl PositionProvider for LinearDrift {
    fn position(&self, t: f64) -> Vec3 {
        self.velocity.map(|v| v * t)
    }

    fn max_speed(&self) -> f64 {
        self.velocity.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Where spawned entities appear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum Placement {
    Fixed {
        position: Vec3,
    },
    /// On the `x = y = 0` axis at height `z`.
    Lane {
        z: f64,
    },
    /// Uniformly random over an axis-aligned rectangle at height `z`.
    UniformRect {
        x_range: [f64; 2],
        y_range: [f64; 2],
        z: f64,
    },
}

impl Placement {
    pub fn validate(&self) -> Result<(), SynthError> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match self {
            Placement::Fixed { position } => finite(position),
            Placement::Lane { z } => z.is_finite(),
            Placement::UniformRect { x_range, y_range, z } => {
                finite(x_range)
                    && finite(y_range)
                    && z.is_finite()
                    && x_range[0] <= x_range[1]
                    && y_range[0] <= y_range[1]
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid placement {self:?}")))
        }
    }

    fn place(&self, rng: &mut impl Rng) -> Vec3 {
        match *self {
            Placement::Fixed { position } => position,
            Placement::Lane { z } => [0.0, 0.0, z],
            Placement::UniformRect { x_range, y_range, z } => {
                let x = x_range[0] + (x_range[1] - x_range[0]) * rng.random::<f64>();
                let y = y_range[0] + (y_range[1] - y_range[0]) * rng.random::<f64>();
                [x, y, z]
            }
        }
    }
}

/// Generator for the `index`-th entity of placement stream `stream`.
///
/// Each entity draws from its own ChaCha8 key, so positions do not depend on
/// how many other entities exist or in which order they are generated.
pub fn entity_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpawnEvent {
    pub t_s: f64,
    pub entity_kind: String,
    pub size: f64,
    pub position: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseHit {
    pub t_s: f64,
    pub strength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpawnParams {
    pub size_base: f64,
    pub size_per_strength: f64,
    pub placement: Placement,
}

/// One spawn per impulse, sized `size_base + size_per_strength * strength`.
pub fn spawn_from_impulses(
    events: &[ImpulseHit],
    entity_kind: &str,
    params: &SpawnParams,
    seed: u64,
    stream: u64,
) -> Result<Vec<SpawnEvent>, SynthError> {
    if !(params.size_base > 0.0 && params.size_base.is_finite()) {
        return Err(invalid(format!("size_base {} must be positive", params.size_base)));
    }
    if !(params.size_per_strength >= 0.0 && params.size_per_strength.is_finite()) {
        return Err(invalid(format!(
            "size_per_strength {} must be non-negative",
            params.size_per_strength
        )));
    }
    params.placement.validate()?;
    events
        .iter()
        .enumerate()
        .map(|(i, hit)| {
            if !(hit.strength >= 0.0 && hit.strength.is_finite()) {
                return Err(invalid(format!("strength {} must be non-negative", hit.strength)));
            }
            let mut rng = entity_rng(seed, stream, i as u64);
            Ok(SpawnEvent {
                t_s: hit.t_s,
                entity_kind: entity_kind.to_string(),
                size: params.size_base + params.size_per_strength * hit.strength,
                position: params.placement.place(&mut rng),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub t_s: f64,
    pub position: Vec3,
    pub scale: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnimationCurves {
    pub object_id: String,
    pub fps: f64,
    pub samples: Vec<CurveSample>,
}

pub const CURVE_HEADER: &str = "t,px,py,pz,sx,sy,sz";

impl AnimationCurves {
    /// `t,px,py,pz,sx,sy,sz` rows in shortest round-trip float notation.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::with_capacity(64 * (self.samples.len() + 1));
        out.push_str(CURVE_HEADER);
        out.push('\n');
        for s in &self.samples {
            // `+ 0.0` folds negative zero
            let [px, py, pz] = s.position.map(|v| v + 0.0);
            let [sx, sy, sz] = s.scale;
            writeln!(out, "{},{px},{py},{pz},{sx},{sy},{sz}", s.t_s + 0.0).expect("writing to a String");
        }
        out
    }
}

/// Samples providers at `t = i / fps` for `i = 0..=floor(duration_s * fps)`.
pub fn sample(
    object_id: &str,
    positions: &[&dyn PositionProvider],
    scales: &[&dyn ScaleProvider],
    duration_s: f64,
    fps: f64,
) -> Result<AnimationCurves, SynthError> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(invalid(format!("fps {fps} must be positive")));
    }
    if !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(invalid(format!("duration {duration_s} must be non-negative")));
    }
    let last = (duration_s * fps + 1e-9).floor() as usize;
    let samples = (0..=last)
        .map(|i| {
            let t = i as f64 / fps;
            let mut position = [0.0; 3];
            for p in positions {
                let v = p.position(t);
                for a in 0..3 {
                    position[a] += v[a];
                }
            }
            let mut scale = [1.0; 3];
            for s in scales {
                let v = s.scale(t);
                for a in 0..3 {
                    scale[a] *= v[a];
                }
            }
            CurveSample {
                t_s: t,
                position,
                scale,
            }
        })
        .collect();
    Ok(AnimationCurves {
        object_id: object_id.to_string(),
        fps,
        samples,
    })
}
