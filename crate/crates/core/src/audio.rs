//! Mono audio clips, WAV I/O and sample-rate conversion.
//!
//! Every signal handled downstream is an [`AudioClip`]: a mono sequence of
//! `f64` amplitudes in `[-1, 1]` tagged with its sample rate. Stereo input is
//! averaged to mono on load and out-of-range float samples are clamped.

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("sample {index} is not finite")]
    NonFiniteSample { index: usize },
    #[error("sample {index} = {value} lies outside [-1, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("cannot read {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("unsupported audio format in {path}: {detail}")]
    Unsupported { path: PathBuf, detail: String },
    #[error("{path} contains no audio frames")]
    Empty { path: PathBuf },
    #[error("cannot write {path}: {reason}")]
    Write { path: PathBuf, reason: String },
}

/// A mono signal with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioClip {
    /// Builds a clip, rejecting non-finite or out-of-range samples.
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self, AudioError> {
        if sample_rate_hz == 0 {
            return Err(AudioError::InvalidSampleRate);
        }
        for (index, &value) in samples.iter().enumerate() {
            if !value.is_finite() {
                return Err(AudioError::NonFiniteSample { index });
            }
            if !(-1.0..=1.0).contains(&value) {
                return Err(AudioError::OutOfRange { index, value });
            }
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    /// Builds a clip, clamping finite samples into `[-1, 1]`.
    pub fn clamped(mut samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self, AudioError> {
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(AudioError::NonFiniteSample { index });
        }
        for s in &mut samples {
            *s = s.clamp(-1.0, 1.0);
        }
        Self::new(samples, sample_rate_hz)
    }

    pub fn silence(len: usize, sample_rate_hz: u32) -> Result<Self, AudioError> {
        Self::new(vec![0.0; len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Multiplies every sample by `gain`; the result is clamped.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| (s * gain).clamp(-1.0, 1.0)).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Copies the half-open sample range `[start, end)`, clamped to the clip.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        Self {
            samples: self.samples[start..end].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// On-disk sample encoding used by [`save_wav_as`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Pcm24,
    Float32,
}

impl WavEncoding {
    /// Largest round-trip error for one sample in `[-1, 1]`.
    pub fn quantization_step(self) -> f64 {
        match self {
            WavEncoding::Pcm16 => 1.0 / 32768.0,
            WavEncoding::Pcm24 => 1.0 / 8_388_608.0,
            WavEncoding::Float32 => f32::EPSILON as f64,
        }
    }
}

fn read_error(path: &Path, err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(e) => AudioError::Unreadable {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
        hound::Error::FormatError(msg) => AudioError::Unreadable {
            path: path.to_path_buf(),
            reason: msg.to_string(),
        },
        other => AudioError::Unsupported {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    }
}

/// Reads a PCM16, PCM24 or float32 WAV file (mono or stereo) as a mono clip.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| read_error(path, e))?;
    let spec = reader.spec();
    let unsupported = |detail: String| AudioError::Unsupported {
        path: path.to_path_buf(),
        detail,
    };
    if spec.channels == 0 || spec.channels > 2 {
        return Err(unsupported(format!("{} channels", spec.channels)));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = 1.0 / f64::from(1u32 << (bits - 1));
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<Result<_, _>>()
                .map_err(|e| read_error(path, e))?
        }
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| read_error(path, e))?,
        (format, bits) => {
            return Err(unsupported(format!("{bits}-bit {format:?} samples")));
        }
    };
    let channels = usize::from(spec.channels);
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if mono.is_empty() {
        return Err(AudioError::Empty {
            path: path.to_path_buf(),
        });
    }
    AudioClip::clamped(mono, spec.sample_rate)
}

/// Writes the clip as 16-bit PCM mono.
pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    save_wav_as(clip, path, WavEncoding::Pcm16)
}

pub fn save_wav_as(clip: &AudioClip, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<(), AudioError> {
    let path = path.as_ref();
    let write_err = |e: hound::Error| AudioError::Write {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let (bits, format) = match encoding {
        WavEncoding::Pcm16 => (16, hound::SampleFormat::Int),
        WavEncoding::Pcm24 => (24, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz(),
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(write_err)?;
    match encoding {
        WavEncoding::Float32 => {
            for &s in clip.samples() {
                writer.write_sample(s as f32).map_err(write_err)?;
            }
        }
        WavEncoding::Pcm16 | WavEncoding::Pcm24 => {
            let full_scale = f64::from(1u32 << (bits - 1));
            let (lo, hi) = (-full_scale, full_scale - 1.0);
            for &s in clip.samples() {
                let q = (s * full_scale).round().clamp(lo, hi) as i32;
                writer.write_sample(q).map_err(write_err)?;
            }
        }
    }
    writer.finalize().map_err(write_err)
}

/// Linear-interpolation resampler.
///
/// Output sample `n` sits at time `n / target_rate_hz`; source positions past
/// the last input sample hold the last value. The interpolator is linear in
/// the signal, so any other band-limited kernel can replace it behind this
/// signature.
pub fn resample(clip: &AudioClip, target_rate_hz: u32) -> Result<AudioClip, AudioError> {
    if target_rate_hz == 0 {
        return Err(AudioError::InvalidSampleRate);
    }
    let source_rate = clip.sample_rate_hz();
    if source_rate == target_rate_hz || clip.is_empty() {
        return Ok(AudioClip {
            samples: clip.samples.clone(),
            sample_rate_hz: target_rate_hz,
        });
    }
    let src = clip.samples();
    let out_len =
        ((src.len() as u64 * u64::from(target_rate_hz) + u64::from(source_rate) / 2) / u64::from(source_rate)) as usize;
    let ratio = f64::from(source_rate) / f64::from(target_rate_hz);
    let last = src.len() - 1;
    let samples = (0..out_len)
        .map(|n| {
            let pos = n as f64 * ratio;
            let i = pos.floor() as usize;
            if i >= last {
                return src[last];
            }
            let frac = pos - i as f64;
            src[i] * (1.0 - frac) + src[i + 1] * frac
        })
        .collect();
    AudioClip::clamped(samples, target_rate_hz)
}
