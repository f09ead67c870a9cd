//! Correlation numerics: raw and normalized cross-correlation, energy,
//! boxcar/max windows and local-maximum picking.
//!
//! Lag `τ` in a [`CorrelationTrace`] is the onset of the pattern inside the
//! sequence, so `values[τ]` compares `s[τ..τ + len(p)]` against `p`. The
//! sequence is treated as zero past its end, which gives one value per
//! sequence sample.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio::AudioClip;

/// Guard on the product of windowed energies in the normalized correlation.
pub const NCC_ENERGY_EPSILON: f64 = 1e-12;

/// Patterns shorter than this use the direct sum under [`CorrelationMethod::Auto`].
const DIRECT_MAX_PATTERN_LEN: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("sample rates differ: sequence {sequence} Hz, pattern {pattern} Hz")]
    RateMismatch { sequence: u32, pattern: u32 },
    #[error("pattern is empty")]
    EmptyPattern,
    #[error("pattern ({pattern} samples) is longer than the sequence ({sequence} samples)")]
    PatternTooLong { pattern: usize, sequence: usize },
    #[error("pattern has zero energy")]
    ZeroEnergyPattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrelationMethod {
    Direct,
    Fft,
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTrace {
    pub values: Vec<f64>,
    pub sample_rate_hz: u32,
    pub normalized: bool,
}

impl CorrelationTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lag_to_seconds(&self, lag: usize) -> f64 {
        lag as f64 / self.sample_rate_hz as f64
    }

    fn window_samples(&self, window_s: f64) -> usize {
        (window_s * self.sample_rate_hz as f64).round().max(0.0) as usize
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            values,
            sample_rate_hz: self.sample_rate_hz,
            normalized: self.normalized,
        }
    }
}

/// A strict local maximum of a trace (plateaus report their center sample).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMax {
    pub lag: usize,
    pub value: f64,
}

fn check_pair(s: &AudioClip, p: &AudioClip) -> Result<(), SignalError> {
    if s.sample_rate_hz() != p.sample_rate_hz() {
        return Err(SignalError::RateMismatch {
            sequence: s.sample_rate_hz(),
            pattern: p.sample_rate_hz(),
        });
    }
    if p.is_empty() {
        return Err(SignalError::EmptyPattern);
    }
    if p.len() > s.len() {
        return Err(SignalError::PatternTooLong {
            pattern: p.len(),
            sequence: s.len(),
        });
    }
    Ok(())
}

/// `out[τ] = Σ_u s[τ+u]·p[u]` for `τ in 0..len(s)`, by brute force.
pub fn correlate_direct(s: &[f64], p: &[f64]) -> Vec<f64> {
    (0..s.len())
        .map(|lag| s[lag..].iter().zip(p).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// Same sums as [`correlate_direct`] via `IFFT(S · conj(P))`, zero-padded to
/// the next power of two at or above `len(s) + len(p)` so nothing wraps.
pub fn correlate_fft(s: &[f64], p: &[f64]) -> Vec<f64> {
    if s.is_empty() {
        return Vec::new();
    }
    let n = (s.len() + p.len()).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);

    let mut seq: Vec<Complex<f64>> = s.iter().map(|&x| Complex::new(x, 0.0)).collect();
    seq.resize(n, Complex::new(0.0, 0.0));
    let mut pat: Vec<Complex<f64>> = p.iter().map(|&x| Complex::new(x, 0.0)).collect();
    pat.resize(n, Complex::new(0.0, 0.0));

    forward.process(&mut seq);
    forward.process(&mut pat);
    for (a, b) in seq.iter_mut().zip(&pat) {
        *a *= b.conj();
    }
    inverse.process(&mut seq);

    let scale = 1.0 / n as f64;
    seq[..s.len()].iter().map(|c| c.re * scale).collect()
}

fn correlate_sums(s: &[f64], p: &[f64], method: CorrelationMethod) -> Vec<f64> {
    match method {
        CorrelationMethod::Direct => correlate_direct(s, p),
        CorrelationMethod::Fft => correlate_fft(s, p),
        CorrelationMethod::Auto if p.len() <= DIRECT_MAX_PATTERN_LEN => correlate_direct(s, p),
        CorrelationMethod::Auto => correlate_fft(s, p),
    }
}

/// Unnormalized cross-correlation as a discretized integral (sums scaled by
/// `1 / sample_rate_hz`).
pub fn raw_cross_correlate(s: &AudioClip, p: &AudioClip) -> Result<CorrelationTrace, SignalError> {
    raw_cross_correlate_with(s, p, CorrelationMethod::Auto)
}

pub fn raw_cross_correlate_with(
    s: &AudioClip,
    p: &AudioClip,
    method: CorrelationMethod,
) -> Result<CorrelationTrace, SignalError> {
    check_pair(s, p)?;
    let dt = 1.0 / s.sample_rate_hz() as f64;
    let values = correlate_sums(s.samples(), p.samples(), method)
        .into_iter()
        .map(|v| v * dt)
        .collect();
    Ok(CorrelationTrace {
        values,
        sample_rate_hz: s.sample_rate_hz(),
        normalized: false,
    })
}

/// Windowed normalized cross-correlation, bounded to `[-1, 1]`.
///
/// The denominator uses the energy of the sequence under the pattern window
/// (truncated at the sequence end) and the full pattern energy. Windows whose
/// energy product is below [`NCC_ENERGY_EPSILON`], or below the rounding
/// floor of the running energy sum, yield 0.
pub fn normalized_cross_correlate(s: &AudioClip, p: &AudioClip) -> Result<CorrelationTrace, SignalError> {
    normalized_cross_correlate_with(s, p, CorrelationMethod::Auto)
}

pub fn normalized_cross_correlate_with(
    s: &AudioClip,
    p: &AudioClip,
    method: CorrelationMethod,
) -> Result<CorrelationTrace, SignalError> {
    check_pair(s, p)?;
    let pattern_energy: f64 = p.samples().iter().map(|x| x * x).sum();
    if pattern_energy <= 0.0 {
        return Err(SignalError::ZeroEnergyPattern);
    }
    let xs = s.samples();
    let m = p.len();
    let mut prefix = Vec::with_capacity(xs.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for x in xs {
        acc += x * x;
        prefix.push(acc);
    }
    let rounding_floor = 64.0 * f64::EPSILON * acc;

    let sums = correlate_sums(xs, p.samples(), method);
    let values = sums
        .into_iter()
        .enumerate()
        .map(|(lag, num)| {
            let window_energy = prefix[(lag + m).min(xs.len())] - prefix[lag];
            let denom = window_energy * pattern_energy;
            if window_energy <= rounding_floor || denom <= NCC_ENERGY_EPSILON {
                0.0
            } else {
                (num / denom.sqrt()).clamp(-1.0, 1.0)
            }
        })
        .collect();
    Ok(CorrelationTrace {
        values,
        sample_rate_hz: s.sample_rate_hz(),
        normalized: true,
    })
}

/// Discretized `∫ x²(t) dt`.
pub fn energy(x: &AudioClip) -> f64 {
    x.samples().iter().map(|v| v * v).sum::<f64>() / x.sample_rate_hz() as f64
}

/// Half-open index range `[lo, hi)` of a centered window of `width` samples.
fn centered(i: usize, width: usize, len: usize) -> (usize, usize) {
    let before = width / 2;
    let after = width - before;
    (i.saturating_sub(before), (i + after).min(len))
}

/// Centered boxcar mean; partial windows at the edges average only the
/// samples that exist. Windows of at most one sample return the input.
pub fn moving_average(trace: &CorrelationTrace, window_s: f64) -> CorrelationTrace {
    let width = trace.window_samples(window_s);
    if width <= 1 {
        return trace.clone();
    }
    let v = &trace.values;
    let mut prefix = Vec::with_capacity(v.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for x in v {
        acc += x;
        prefix.push(acc);
    }
    let out = (0..v.len())
        .map(|i| {
            let (lo, hi) = centered(i, width, v.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();
    trace.with_values(out)
}

/// Centered running maximum over the same window geometry as
/// [`moving_average`].
pub fn moving_max(trace: &CorrelationTrace, window_s: f64) -> CorrelationTrace {
    let width = trace.window_samples(window_s);
    if width <= 1 {
        return trace.clone();
    }
    let v = &trace.values;
    let n = v.len();
    let mut out = Vec::with_capacity(n);
    // indices with decreasing values; front is the current window maximum
    let mut deque = std::collections::VecDeque::new();
    let mut pushed = 0;
    for i in 0..n {
        let (lo, hi) = centered(i, width, n);
        while pushed < hi {
            while deque.back().is_some_and(|&j: &usize| v[j] <= v[pushed]) {
                deque.pop_back();
            }
            deque.push_back(pushed);
            pushed += 1;
        }
        while deque.front().is_some_and(|&j| j < lo) {
            deque.pop_front();
        }
        out.push(v[*deque.front().expect("window is never empty")]);
    }
    trace.with_values(out)
}

/// Strict local maxima above `threshold`, in increasing lag order.
///
/// A run of equal values counts as one maximum, reported at the run's center
/// (lower middle for even runs). Runs touching either end of the trace are
/// not maxima.
pub fn find_local_maxima(trace: &CorrelationTrace, threshold: f64) -> Vec<LocalMax> {
    let v = &trace.values;
    let mut out = Vec::new();
    let mut start = 1;
    while start + 1 < v.len() {
        let value = v[start];
        let mut end = start;
        while end + 1 < v.len() && v[end + 1] == value {
            end += 1;
        }
        if end + 1 < v.len() && v[start - 1] < value && v[end + 1] < value && value > threshold {
            out.push(LocalMax {
                lag: (start + end) / 2,
                value,
            });
        }
        start = end + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn clip(samples: Vec<f64>, sr: u32) -> AudioClip {
        AudioClip::new(samples, sr).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }

    fn trace(values: Vec<f64>) -> CorrelationTrace {
        CorrelationTrace {
            values,
            sample_rate_hz: 1000,
            normalized: true,
        }
    }

    /// Textbook NCC by direct summation over every lag.
    fn ncc_oracle(s: &[f64], p: &[f64]) -> Vec<f64> {
        let ep: f64 = p.iter().map(|x| x * x).sum();
        (0..s.len())
            .map(|lag| {
                let mut num = 0.0;
                let mut es = 0.0;
                for (u, &pv) in p.iter().enumerate() {
                    if let Some(&sv) = s.get(lag + u) {
                        num += sv * pv;
                        es += sv * sv;
                    }
                }
                if es * ep <= NCC_ENERGY_EPSILON {
                    0.0
                } else {
                    num / (es * ep).sqrt()
                }
            })
            .collect()
    }

    #[test]
    fn impulse_autocorrelation() {
        let mut s = vec![0.0; 16];
        s[0] = 1.0;
        let p = vec![1.0];
        let t = raw_cross_correlate(&clip(s, 8000), &clip(p, 8000)).unwrap();
        assert_eq!(t.len(), 16);
        assert!((t.values[0] - 1.0 / 8000.0).abs() < 1e-15);
        assert!(t.values[1..].iter().all(|&v| v == 0.0));
        assert!(!t.normalized);
    }

    #[test]
    fn delayed_copy_peaks_at_delay() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random(&mut rng, 200);
        let mut s = vec![0.0; 2000];
        s[737..937].copy_from_slice(&p);
        let t = raw_cross_correlate(&clip(s, 1000), &clip(p, 1000)).unwrap();
        let argmax = (0..t.len())
            .max_by(|&a, &b| t.values[a].total_cmp(&t.values[b]))
            .unwrap();
        assert_eq!(argmax, 737);
    }

    #[test]
    fn fft_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random(&mut rng, 1024);
        let p = random(&mut rng, 128);
        let direct = correlate_direct(&s, &p);
        let fast = correlate_fft(&s, &p);
        let worst = direct.iter().zip(&fast).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn argument_errors() {
        let s = clip(vec![0.1; 10], 8000);
        assert_eq!(
            raw_cross_correlate(&s, &clip(vec![0.1], 4000)).unwrap_err(),
            SignalError::RateMismatch {
                sequence: 8000,
                pattern: 4000
            }
        );
        assert_eq!(
            raw_cross_correlate(&s, &clip(vec![], 8000)).unwrap_err(),
            SignalError::EmptyPattern
        );
        assert_eq!(
            normalized_cross_correlate(&s, &clip(vec![0.0; 3], 8000)).unwrap_err(),
            SignalError::ZeroEnergyPattern
        );
        assert!(matches!(
            raw_cross_correlate(&s, &clip(vec![0.1; 11], 8000)),
            Err(SignalError::PatternTooLong { .. })
        ));
    }

    #[test]
    fn ncc_exact_and_scaled_copies_reach_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random(&mut rng, 300);
        for gain in [1.0, 0.25] {
            let mut s = random(&mut rng, 3000).into_iter().map(|x| 0.01 * x).collect::<Vec<_>>();
            for (u, &pv) in p.iter().enumerate() {
                s[1200 + u] = gain * pv;
            }
            let t = normalized_cross_correlate(&clip(s, 8000), &clip(p.clone(), 8000)).unwrap();
            assert!((t.values[1200] - 1.0).abs() < 1e-9, "{}", t.values[1200]);
        }
    }

    #[test]
    fn ncc_sine_against_cosine_is_orthogonal() {
        let sr = 8000;
        let n = 800; // 10 whole periods of 100 Hz
        let sine: Vec<f64> = (0..n).map(|i| (TAU * 100.0 * i as f64 / sr as f64).sin()).collect();
        let cosine: Vec<f64> = (0..n).map(|i| (TAU * 100.0 * i as f64 / sr as f64).cos()).collect();
        let t = normalized_cross_correlate(&clip(sine, sr), &clip(cosine, sr)).unwrap();
        assert!(t.values[0].abs() < 1e-6, "{}", t.values[0]);
    }

    #[test]
    fn ncc_matches_oracle_and_silence_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = random(&mut rng, 700);
        for x in &mut s[300..450] {
            *x = 0.0;
        }
        let p = random(&mut rng, 90);
        let oracle = ncc_oracle(&s, &p);
        for method in [CorrelationMethod::Direct, CorrelationMethod::Fft] {
            let t = normalized_cross_correlate_with(&clip(s.clone(), 100), &clip(p.clone(), 100), method).unwrap();
            for (a, b) in t.values.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9);
            }
            assert!(t.values[320..360].iter().all(|&v| v == 0.0));
        }
        let silent = clip(vec![0.0; 500], 100);
        let t = normalized_cross_correlate(&silent, &clip(p, 100)).unwrap();
        assert!(t.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn energy_examples() {
        assert_eq!(energy(&clip(vec![0.0; 100], 8000)), 0.0);
        for sr in [8000, 44100, 96000] {
            assert!((energy(&clip(vec![1.0; sr as usize], sr)) - 1.0).abs() < 1e-12);
        }
        let sine: Vec<f64> = (0..44100).map(|i| (TAU * 440.0 * i as f64 / 44100.0).sin()).collect();
        assert!((energy(&clip(sine, 44100)) - 0.5).abs() < 1e-4);
    }

    #[test]
    fn moving_average_examples() {
        let t = trace(vec![0.3, 0.1, 0.7]);
        assert_eq!(moving_average(&t, 0.0005), t);

        let c = trace(vec![0.4; 50]);
        for v in moving_average(&c, 0.011).values {
            assert!((v - 0.4).abs() < 1e-12);
        }

        let mut spike = vec![0.0; 11];
        spike[5] = 1.0;
        let out = moving_average(&trace(spike), 0.005).values;
        for (i, v) in out.iter().enumerate() {
            let expected = if (3..=7).contains(&i) { 0.2 } else { 0.0 };
            assert!((v - expected).abs() < 1e-12, "index {i}: {v}");
        }
    }

    #[test]
    fn moving_average_edges_use_partial_windows() {
        let out = moving_average(&trace(vec![1.0, 2.0, 3.0, 4.0]), 0.003).values;
        assert_eq!(out, vec![1.5, 2.0, 3.0, 3.5]);
    }

    #[test]
    fn moving_max_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random(&mut rng, 200);
        for width in [2usize, 5, 8, 33] {
            let out = moving_max(&trace(v.clone()), width as f64 / 1000.0).values;
            for (i, &got) in out.iter().enumerate() {
                let (lo, hi) = centered(i, width, v.len());
                let expected = v[lo..hi].iter().cloned().fold(f64::MIN, f64::max);
                assert_eq!(got, expected);
            }
        }
    }

    #[test]
    fn local_maxima_examples() {
        let mono = trace((0..20).map(|i| i as f64 / 20.0).collect());
        assert!(find_local_maxima(&mono, -1.0).is_empty());

        assert_eq!(
            find_local_maxima(&trace(vec![0.0, 0.8, 0.0]), 0.5),
            vec![LocalMax { lag: 1, value: 0.8 }]
        );
        assert!(find_local_maxima(&trace(vec![0.0, 0.4, 0.0]), 0.5).is_empty());

        let plateau = trace(vec![0.0, 0.9, 0.9, 0.9, 0.0]);
        assert_eq!(find_local_maxima(&plateau, 0.5), vec![LocalMax { lag: 2, value: 0.9 }]);
        let even = trace(vec![0.0, 0.9, 0.9, 0.0]);
        assert_eq!(find_local_maxima(&even, 0.5)[0].lag, 1);

        // a shoulder is not a maximum
        let shoulder = trace(vec![0.0, 0.9, 0.9, 1.0, 0.0]);
        assert_eq!(find_local_maxima(&shoulder, 0.5), vec![LocalMax { lag: 3, value: 1.0 }]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn fft_and_direct_agree(
            s in prop::collection::vec(-1.0f64..=1.0, 1..4096),
            p_len in 1usize..512,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random(&mut rng, p_len.min(s.len()));
            let direct = correlate_direct(&s, &p);
            let fast = correlate_fft(&s, &p);
            for (a, b) in direct.iter().zip(&fast) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn ncc_is_bounded(
            s in prop::collection::vec(-1.0f64..=1.0, 64..800),
            p in prop::collection::vec(-1.0f64..=1.0, 1..64),
        ) {
            prop_assume!(p.iter().any(|&x| x != 0.0));
            let t = normalized_cross_correlate(&clip(s, 8000), &clip(p, 8000)).unwrap();
            prop_assert!(t.values.iter().all(|v| (-1.0 - 1e-6..=1.0 + 1e-6).contains(v)));
        }

        #[test]
        fn energy_is_quadratic(
            x in prop::collection::vec(-1.0f64..=1.0, 1..500),
            a in 0.0f64..=1.0,
        ) {
            let base = clip(x.clone(), 8000);
            let scaled = clip(x.iter().map(|v| a * v).collect(), 8000);
            let (e1, e2) = (energy(&base), energy(&scaled));
            prop_assert!((e2 - a * a * e1).abs() <= 1e-9 * e2.max(a * a * e1).max(1e-300));
        }

        #[test]
        fn raw_correlation_is_bilinear(
            seed in any::<u64>(),
            a in -1.0f64..=1.0,
            b in -1.0f64..=1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = (random(&mut rng, 300), random(&mut rng, 300));
            let p = random(&mut rng, 70);
            let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| (a * u + b * v) / 2.0).collect();
            let c = |s: Vec<f64>| raw_cross_correlate_with(&clip(s, 1), &clip(p.clone(), 1), CorrelationMethod::Fft).unwrap().values;
            let (lhs, cx, cy) = (c(mix), c(x), c(y));
            for i in 0..lhs.len() {
                prop_assert!((lhs[i] - (a * cx[i] + b * cy[i]) / 2.0).abs() < 1e-9);
            }
        }

        #[test]
        fn moving_average_preserves_interior_mean(
            body in prop::collection::vec(-1.0f64..=1.0, 1..100),
            width in 2usize..20,
        ) {
            let pad = width + 1;
            let mut v = vec![0.0; pad];
            v.extend(&body);
            v.extend(vec![0.0; pad]);
            let total: f64 = v.iter().sum();
            let out = moving_average(&trace(v), width as f64 / 1000.0);
            let total_out: f64 = out.values.iter().sum();
            prop_assert!((total - total_out).abs() < 1e-9);
        }
    }
}
