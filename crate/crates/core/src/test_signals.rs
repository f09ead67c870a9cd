//! Deterministic synthetic patterns and sequences with known event plans.
//!
//! These stand in for recorded onomatopoeia in tests and fixtures: a tonal
//! burst behaves like a voiced "Tick"/"Pop", a noise burst like a fricative
//! "Chhh". All randomness comes from ChaCha8 streams keyed by explicit seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

use crate::audio::{AudioClip, AudioError};
use crate::detector::{PatternDictionary, SoundPattern};
use crate::timeline::EventKind;

/// Peak amplitude of generated patterns.
pub const PATTERN_PEAK: f64 = 0.9;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("duration {0} s must be positive and finite")]
    InvalidDuration(f64),
    #[error("planted[{index}]: {message}")]
    InvalidInstance { index: usize, message: String },
    #[error("planted[{first}] and planted[{second}] overlap")]
    Overlap { first: usize, second: usize },
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternShape {
    TonalBurst,
    NoiseBurst,
}

/// Tone frequency of a tonal burst: a golden-ratio walk over 200–2000 Hz, so
/// nearby seeds land far apart.
pub fn tonal_frequency_hz(seed: u64) -> f64 {
    const PHI_FRAC: f64 = 0.618_033_988_749_894_9;
    let frac = ((seed % 1_000_003) as f64 * PHI_FRAC).fract();
    200.0 + 1800.0 * frac
}

fn hann(n: usize, len: usize) -> f64 {
    (PI * (n as f64 + 0.5) / len as f64).sin().powi(2)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn peak_normalize(samples: &mut [f64], peak: f64) {
    let max = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max > 0.0 {
        let g = peak / max;
        samples.iter_mut().for_each(|v| *v *= g);
    }
}

/// A Hann-enveloped tone or noise burst, peak-normalized to [`PATTERN_PEAK`].
pub fn make_pattern(
    shape: PatternShape,
    duration_s: f64,
    seed: u64,
    sample_rate_hz: u32,
) -> Result<AudioClip, GenError> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(GenError::InvalidDuration(duration_s));
    }
    let len = ((duration_s * sample_rate_hz as f64).round() as usize).max(1);
    let sr = sample_rate_hz as f64;
    let mut samples: Vec<f64> = match shape {
        PatternShape::TonalBurst => {
            let freq = tonal_frequency_hz(seed);
            let phase = TAU * (seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11) as f64 / (1u64 << 53) as f64;
            (0..len)
                .map(|n| hann(n, len) * (TAU * freq * n as f64 / sr + phase).sin())
                .collect()
        }
        PatternShape::NoiseBurst => {
            let mut rng = rng_for(seed, 0);
            (0..len)
                .map(|n| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    hann(n, len) * g
                })
                .collect()
        }
    };
    peak_normalize(&mut samples, PATTERN_PEAK);
    Ok(AudioClip::new(samples, sample_rate_hz)?)
}

/// Recipe for one generated dictionary entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSpec {
    pub id: String,
    pub shape: PatternShape,
    pub kind: EventKind,
    pub duration_s: f64,
    pub seed: u64,
}

impl PatternSpec {
    pub fn build(&self, sample_rate_hz: u32) -> Result<SoundPattern, GenError> {
        let clip = make_pattern(self.shape, self.duration_s, self.seed, sample_rate_hz)?;
        SoundPattern::new(self.id.clone(), clip, self.kind).map_err(|e| GenError::InvalidInstance {
            index: 0,
            message: e.to_string(),
        })
    }
}

fn one() -> f64 {
    1.0
}

/// One instance to plant: `onset_s` for impulse patterns, `begin_s`/`end_s`
/// for continuous ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedInstance {
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub onset_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub begin_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_s: Option<f64>,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Energy of added uncorrelated noise relative to the instance energy.
    /// The instance's correlation peak drops to about `1 / sqrt(1 + d)`.
    #[serde(default)]
    pub distortion: f64,
}

impl PlantedInstance {
    pub fn impulse(pattern: impl Into<String>, onset_s: f64, amplitude: f64) -> Self {
        Self {
            pattern: pattern.into(),
            onset_s: Some(onset_s),
            begin_s: None,
            end_s: None,
            amplitude,
            distortion: 0.0,
        }
    }

    pub fn continuous(pattern: impl Into<String>, begin_s: f64, end_s: f64, amplitude: f64) -> Self {
        Self {
            pattern: pattern.into(),
            onset_s: None,
            begin_s: Some(begin_s),
            end_s: Some(end_s),
            amplitude,
            distortion: 0.0,
        }
    }

    pub fn with_distortion(mut self, distortion: f64) -> Self {
        self.distortion = distortion;
        self
    }

    /// Distortion that brings the correlation peak to `target` in `(0, 1]`.
    pub fn distortion_for_peak(target: f64) -> f64 {
        1.0 / (target * target) - 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub sample_rate_hz: u32,
    pub duration_s: f64,
    pub noise_rms: f64,
    pub seed: u64,
    #[serde(default)]
    pub allow_overlap: bool,
    pub planted: Vec<PlantedInstance>,
}

/// Everything `gen` needs: pattern recipes plus the planting plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenPlan {
    pub patterns: Vec<PatternSpec>,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedSequence {
    pub clip: AudioClip,
    /// Factor applied at the end to keep the mix inside `[-1, 1]` (1 if none).
    pub gain: f64,
}

enum Span {
    At(usize),
    Between(usize, usize),
}

/// Mixes the planted instances and background noise into one sequence.
///
/// Continuous instances tile the pattern at half-pattern hops; the Hann
/// envelope of each tile gives the crossfade. If the interval is shorter
/// than the pattern, a Hann-tapered excerpt fills it instead. The mix is
/// scaled down only if it would clip.
pub fn place_instances(patterns: &PatternDictionary, plan: &GroundTruth) -> Result<PlacedSequence, GenError> {
    if !(plan.duration_s > 0.0 && plan.duration_s.is_finite()) {
        return Err(GenError::InvalidDuration(plan.duration_s));
    }
    let sr = plan.sample_rate_hz as f64;
    let len = (plan.duration_s * sr).round() as usize;
    let to_index = |t: f64| (t * sr).round() as usize;
    let bad = |index: usize, message: String| GenError::InvalidInstance { index, message };

    let mut resolved = Vec::with_capacity(plan.planted.len());
    let mut extents = Vec::with_capacity(plan.planted.len());
    for (i, inst) in plan.planted.iter().enumerate() {
        let pattern = patterns
            .get(&inst.pattern)
            .ok_or_else(|| bad(i, format!("unknown pattern `{}`", inst.pattern)))?;
        if pattern.clip().sample_rate_hz() != plan.sample_rate_hz {
            return Err(bad(i, "pattern sample rate differs from the plan".into()));
        }
        if !(inst.amplitude.is_finite() && inst.amplitude >= 0.0) {
            return Err(bad(i, format!("amplitude {} must be non-negative", inst.amplitude)));
        }
        if !(inst.distortion.is_finite() && inst.distortion >= 0.0) {
            return Err(bad(i, format!("distortion {} must be non-negative", inst.distortion)));
        }
        let (span, begin, end) = match (pattern.kind(), inst.onset_s, inst.begin_s, inst.end_s) {
            (EventKind::Impulse, Some(t), None, None) => {
                let end = t + pattern.duration_s();
                if !(t >= 0.0 && end <= plan.duration_s + 0.5 / sr) {
                    return Err(bad(
                        i,
                        format!("instance [{t}, {end}] s outside the {} s plan", plan.duration_s),
                    ));
                }
                (Span::At(to_index(t)), t, end)
            }
            (EventKind::Continuous, None, Some(b), Some(e)) => {
                if !(b >= 0.0 && b < e && e <= plan.duration_s) {
                    return Err(bad(
                        i,
                        format!("interval [{b}, {e}] s invalid for the {} s plan", plan.duration_s),
                    ));
                }
                (Span::Between(to_index(b), to_index(e)), b, e)
            }
            (EventKind::Impulse, ..) => return Err(bad(i, "impulse instances need exactly `onset_s`".into())),
            (EventKind::Continuous, ..) => {
                return Err(bad(i, "continuous instances need exactly `begin_s` and `end_s`".into()))
            }
        };
        resolved.push((pattern, span));
        extents.push((begin, end, i));
    }
    if !plan.allow_overlap {
        extents.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in extents.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(GenError::Overlap {
                    first: w[0].2.min(w[1].2),
                    second: w[0].2.max(w[1].2),
                });
            }
        }
    }

    let mut mix = vec![0.0; len];
    for (i, ((pattern, span), inst)) in resolved.iter().zip(&plan.planted).enumerate() {
        let p = pattern.clip().samples();
        let (start, body) = match *span {
            Span::At(start) => (start, p.iter().map(|v| inst.amplitude * v).collect::<Vec<_>>()),
            Span::Between(b, e) => (b, tile(p, e - b, inst.amplitude)),
        };
        let body = if inst.distortion > 0.0 {
            distort(&body, inst.distortion, rng_for(plan.seed, 1 + i as u64))
        } else {
            body
        };
        for (k, v) in body.iter().enumerate() {
            if let Some(slot) = mix.get_mut(start + k) {
                *slot += v;
            }
        }
    }
    if plan.noise_rms > 0.0 {
        let mut rng = rng_for(plan.seed, 0);
        for v in &mut mix {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v += plan.noise_rms * g;
        }
    }
    let peak = mix.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    if gain != 1.0 {
        mix.iter_mut().for_each(|v| *v *= gain);
    }
    Ok(PlacedSequence {
        clip: AudioClip::clamped(mix, plan.sample_rate_hz)?,
        gain,
    })
}

fn tile(p: &[f64], span: usize, amplitude: f64) -> Vec<f64> {
    let mut out = vec![0.0; span];
    if p.len() > span {
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = amplitude * p[k] * hann(k, span);
        }
        return out;
    }
    let hop = (p.len() / 2).max(1);
    let mut start = 0;
    while start + p.len() <= span {
        for (k, v) in p.iter().enumerate() {
            out[start + k] += amplitude * v;
        }
        start += hop;
    }
    out
}

fn distort(body: &[f64], distortion: f64, mut rng: ChaCha8Rng) -> Vec<f64> {
    let n = body.len();
    let noise: Vec<f64> = (0..n)
        .map(|k| {
            let g: f64 = StandardNormal.sample(&mut rng);
            hann(k, n) * g
        })
        .collect();
    let body_energy: f64 = body.iter().map(|v| v * v).sum();
    let noise_energy: f64 = noise.iter().map(|v| v * v).sum();
    if noise_energy == 0.0 {
        return body.to_vec();
    }
    let g = (distortion * body_energy / noise_energy).sqrt();
    body.iter().zip(&noise).map(|(b, z)| b + g * z).collect()
}
