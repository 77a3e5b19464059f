//! Log-mel spectrogram: Hann-windowed STFT through a triangular HTK-mel
//! filterbank spanning 0 Hz to Nyquist.

use super::{AudioBuffer, DspError};
use rustfft::{num_complex::Complex, FftPlanner};

/// Floor applied to mel energies before the natural log.
pub const LOG_FLOOR: f64 = 1e-10;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Returns a frames x n_mels matrix of ln-scaled mel energies.
pub fn mel_spectrogram(
    audio: &AudioBuffer,
    n_mels: usize,
    frame: f64,
    hop: f64,
) -> Result<Vec<Vec<f64>>, DspError> {
    if n_mels == 0 {
        return Err(DspError::InvalidFrameSpec("n_mels must be >= 1".into()));
    }
    if frame <= 0.0 || hop <= 0.0 || frame < hop {
        return Err(DspError::InvalidFrameSpec(format!(
            "frame {frame} s must be >= hop {hop} s, both positive"
        )));
    }
    let sr = audio.sample_rate as f64;
    let frame_len = (frame * sr).round() as usize;
    let hop_len = ((hop * sr).round() as usize).max(1);
    if audio.samples.len() < frame_len {
        return Err(DspError::AudioTooShort {
            len: audio.samples.len(),
            min: frame_len,
        });
    }

    let n_fft = frame_len.next_power_of_two();
    let n_bins = n_fft / 2 + 1;
    let filterbank = build_filterbank(n_mels, n_bins, n_fft, sr);
    let hann: Vec<f64> = (0..frame_len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / frame_len as f64).cos())
        .collect();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n_fft);

    let mut frames = Vec::new();
    let mut start = 0;
    while start + frame_len <= audio.samples.len() {
        let mut buf: Vec<Complex<f64>> = (0..n_fft)
            .map(|i| {
                let s = if i < frame_len {
                    audio.samples[start + i] as f64 * hann[i]
                } else {
                    0.0
                };
                Complex::new(s, 0.0)
            })
            .collect();
        fft.process(&mut buf);

        let power: Vec<f64> = buf[..n_bins].iter().map(|c| c.norm_sqr()).collect();
        let row: Vec<f64> = filterbank
            .iter()
            .map(|filter| {
                let energy: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
                energy.max(LOG_FLOOR).ln()
            })
            .collect();
        frames.push(row);
        start += hop_len;
    }

    Ok(frames)
}

/// Triangular filters with peaks at n_mels points spaced uniformly on the
/// mel scale between 0 Hz and Nyquist. Peak weight 1, no area normalization.
fn build_filterbank(n_mels: usize, n_bins: usize, n_fft: usize, sr: f64) -> Vec<Vec<f64>> {
    let mel_max = hz_to_mel(sr / 2.0);
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();

    (0..n_mels)
        .map(|m| {
            let (left, center, right) = (points[m], points[m + 1], points[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * sr / n_fft as f64;
                    if f <= left || f >= right {
                        0.0
                    } else if f <= center {
                        (f - left) / (center - left)
                    } else {
                        (right - f) / (right - center)
                    }
                })
                .collect()
        })
        .collect()
}
