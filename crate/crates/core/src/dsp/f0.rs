//! Autocorrelation F0 estimation.

use super::{AudioBuffer, DspError};

/// Fixed search range covering children and teenagers.
pub const F0_MIN_HZ: f64 = 60.0;
pub const F0_MAX_HZ: f64 = 500.0;
/// Frames whose peak normalized autocorrelation falls below this are unvoiced.
pub const VOICING_THRESHOLD: f64 = 0.3;

/// Per-frame F0 track. `values[i]` is `None` for unvoiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    pub frame_hop: f64,
    pub values: Vec<Option<f64>>,
    pub median_f0: Option<f64>,
}

impl F0Track {
    pub fn voiced_fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|v| v.is_some()).count() as f64 / self.values.len() as f64
    }
}

/// Estimates per-frame F0 by picking the peak of the normalized
/// autocorrelation within the [`F0_MIN_HZ`], [`F0_MAX_HZ`] lag range, with
/// parabolic refinement of the peak lag. `frame` must span at least two
/// periods of the lowest searchable F0.
pub fn estimate_f0(audio: &AudioBuffer, frame: f64, hop: f64) -> Result<F0Track, DspError> {
    let sr = audio.sample_rate as f64;
    if frame < 2.0 / F0_MIN_HZ {
        return Err(DspError::InvalidFrameSpec(format!(
            "frame {frame} s too short; need >= {} s for {} Hz",
            2.0 / F0_MIN_HZ,
            F0_MIN_HZ
        )));
    }
    if hop <= 0.0 || frame <= 0.0 {
        return Err(DspError::InvalidFrameSpec(
            "frame and hop must be positive".into(),
        ));
    }
    let frame_len = (frame * sr).round() as usize;
    let hop_len = ((hop * sr).round() as usize).max(1);
    if audio.samples.len() < frame_len {
        return Err(DspError::AudioTooShort {
            len: audio.samples.len(),
            min: frame_len,
        });
    }

    let lag_min = (sr / F0_MAX_HZ).floor() as usize;
    let lag_max = ((sr / F0_MIN_HZ).ceil() as usize).min(frame_len - 1);

    let mut values = Vec::new();
    let mut start = 0;
    while start + frame_len <= audio.samples.len() {
        let window = &audio.samples[start..start + frame_len];
        values.push(frame_f0(window, sr, lag_min, lag_max));
        start += hop_len;
    }

    let mut voiced: Vec<f64> = values.iter().flatten().copied().collect();
    voiced.sort_by(|a, b| a.partial_cmp(b).expect("f0 values are finite"));
    let median_f0 = median_of_sorted(&voiced);

    Ok(F0Track {
        frame_hop: hop,
        values,
        median_f0,
    })
}

fn frame_f0(window: &[f32], sr: f64, lag_min: usize, lag_max: usize) -> Option<f64> {
    let r0: f64 = window.iter().map(|&x| x as f64 * x as f64).sum();
    if r0 <= 0.0 {
        return None;
    }

    let autocorr = |lag: usize| -> f64 {
        let mut acc = 0.0f64;
        for i in 0..window.len() - lag {
            acc += window[i] as f64 * window[i + lag] as f64;
        }
        acc / r0
    };

    let mut best_lag = lag_min;
    let mut best_val = f64::NEG_INFINITY;
    let mut corrs = vec![0.0f64; lag_max + 2];
    for lag in lag_min..=lag_max {
        let v = autocorr(lag);
        corrs[lag] = v;
        if v > best_val {
            best_val = v;
            best_lag = lag;
        }
    }
    if best_val < VOICING_THRESHOLD {
        return None;
    }

    // Parabolic refinement around the integer-lag peak.
    let refined = if best_lag > lag_min && best_lag < lag_max {
        let (a, b, c) = (
            corrs[best_lag - 1],
            corrs[best_lag],
            corrs[best_lag + 1],
        );
        let denom = a - 2.0 * b + c;
        if denom.abs() > 1e-12 {
            best_lag as f64 + 0.5 * (a - c) / denom
        } else {
            best_lag as f64
        }
    } else {
        best_lag as f64
    };

    Some((sr / refined).clamp(F0_MIN_HZ, F0_MAX_HZ))
}

fn median_of_sorted(sorted: &[f64]) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, secs: f64, rate: u32) -> AudioBuffer {
        let n = (secs * rate as f64).round() as usize;
        let samples = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin() as f32 * 0.5)
            .collect();
        AudioBuffer::new(samples, rate).unwrap()
    }

    #[test]
    fn pure_tone_220() {
        let audio = sine(220.0, 2.0, 16000);
        let track = estimate_f0(&audio, 0.040, 0.010).unwrap();
        let median = track.median_f0.unwrap();
        assert!(
            (median - 220.0).abs() / 220.0 < 0.01,
            "median {median} not within 1% of 220"
        );
        assert!(track.voiced_fraction() > 0.9);
    }

    #[test]
    fn silence_is_unvoiced() {
        let audio = AudioBuffer::new(vec![0.0; 32000], 16000).unwrap();
        let track = estimate_f0(&audio, 0.040, 0.010).unwrap();
        assert!(track.values.iter().all(|v| v.is_none()));
        assert_eq!(track.median_f0, None);
    }

    #[test]
    fn rejects_short_frame_and_short_audio() {
        let audio = sine(220.0, 1.0, 16000);
        assert!(estimate_f0(&audio, 0.020, 0.010).is_err());
        let short = AudioBuffer::new(vec![0.1; 100], 16000).unwrap();
        assert!(matches!(
            estimate_f0(&short, 0.040, 0.010),
            Err(DspError::AudioTooShort { .. })
        ));
    }
}
