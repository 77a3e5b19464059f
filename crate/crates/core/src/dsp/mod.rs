//! Signal-processing primitives: framing, spectral features, F0 estimation,
//! band-limited resampling, WSOLA time-stretching, and cents-based pitch
//! shifting.
//!
//! All operations are pure functions over immutable buffers and are
//! deterministic: identical inputs give bit-identical outputs.

mod f0;
mod mel;
mod resample;
mod wsola;

pub use f0::{estimate_f0, F0Track, F0_MAX_HZ, F0_MIN_HZ, VOICING_THRESHOLD};
pub use mel::{mel_spectrogram, LOG_FLOOR};
pub use resample::resample;
pub use wsola::wsola_stretch;

use thiserror::Error;

/// Sample rates the toolkit accepts.
pub const SUPPORTED_SAMPLE_RATES: [u32; 5] = [8000, 16000, 22050, 44100, 48000];

#[derive(Debug, Error)]
pub enum DspError {
    #[error("unsupported sample rate {0} Hz")]
    UnsupportedSampleRate(u32),
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("cents value {cents} outside allowed range ±{max}")]
    CentsOutOfRange { cents: f64, max: f64 },
    #[error("resample ratio {0} outside [0.25, 4]")]
    RatioOutOfRange(f64),
    #[error("stretch factor {0} outside [0.5, 2]")]
    FactorOutOfRange(f64),
    #[error("audio too short: {len} samples, need at least {min}")]
    AudioTooShort { len: usize, min: usize },
    #[error("invalid WSOLA params: {0}")]
    InvalidWsolaParams(String),
    #[error("invalid frame spec: {0}")]
    InvalidFrameSpec(String),
}

/// Mono audio: samples in [-1, 1] at one of the supported sample rates.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    /// Validates the sample rate and that every sample is finite.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, DspError> {
        if !SUPPORTED_SAMPLE_RATES.contains(&sample_rate) {
            return Err(DspError::UnsupportedSampleRate(sample_rate));
        }
        if let Some(idx) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::NonFiniteSample(idx));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Parameters for WSOLA time-stretching, all in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WsolaParams {
    pub segment: f64,
    pub search_radius: f64,
    pub overlap: f64,
}

impl Default for WsolaParams {
    fn default() -> Self {
        Self {
            segment: 0.050,
            search_radius: 0.010,
            overlap: 0.0125,
        }
    }
}

impl WsolaParams {
    pub(crate) fn to_samples(self, sample_rate: u32) -> Result<(usize, usize, usize), DspError> {
        if !(self.overlap < self.segment) {
            return Err(DspError::InvalidWsolaParams(format!(
                "overlap {} must be < segment {}",
                self.overlap, self.segment
            )));
        }
        if !(self.search_radius < self.segment) {
            return Err(DspError::InvalidWsolaParams(format!(
                "search_radius {} must be < segment {}",
                self.search_radius, self.segment
            )));
        }
        let sr = sample_rate as f64;
        let seg = (self.segment * sr).round() as usize;
        let ov = (self.overlap * sr).round() as usize;
        let search = (self.search_radius * sr).round() as usize;
        if seg < 2 || ov == 0 || seg <= ov {
            return Err(DspError::InvalidWsolaParams(format!(
                "segment {seg} / overlap {ov} samples degenerate at {sample_rate} Hz"
            )));
        }
        Ok((seg, ov, search))
    }
}

/// Frequency ratio for a pitch offset in cents (1/100th of a semitone):
/// `2^(cents/1200)`.
pub fn cents_to_ratio(cents: f64) -> Result<f64, DspError> {
    if !cents.is_finite() || cents.abs() > 2400.0 {
        return Err(DspError::CentsOutOfRange { cents, max: 2400.0 });
    }
    Ok((cents / 1200.0).exp2())
}

/// Shifts pitch by `cents` while preserving duration: WSOLA-stretch by the
/// frequency ratio, then resample by the same ratio. Duration is preserved
/// within 1% and the F0 of harmonic content scales by `cents_to_ratio(cents)`.
pub fn pitch_shift(
    audio: &AudioBuffer,
    cents: f64,
    params: WsolaParams,
) -> Result<AudioBuffer, DspError> {
    if !cents.is_finite() || cents.abs() > 1200.0 {
        return Err(DspError::CentsOutOfRange { cents, max: 1200.0 });
    }
    let ratio = cents_to_ratio(cents)?;
    let stretched = wsola_stretch(audio, ratio, params)?;
    resample(&stretched, ratio)
}
