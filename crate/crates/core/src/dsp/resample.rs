//! Band-limited resampling with a windowed-sinc kernel.

use super::{AudioBuffer, DspError};

// 32 taps per side; Blackman-windowed sinc.
const HALF_TAPS: isize = 32;

#[inline]
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = x * std::f64::consts::PI;
        px.sin() / px
    }
}

#[inline]
fn blackman(u: f64) -> f64 {
    // u in [-1, 1]
    0.42 + 0.5 * (std::f64::consts::PI * u).cos() + 0.08 * (2.0 * std::f64::consts::PI * u).cos()
}

/// Resamples with playback-rate semantics: output length is
/// `round(len / ratio)` and the `sample_rate` field is unchanged, so
/// frequencies scale by `ratio`. When `ratio > 1` the kernel cutoff drops to
/// `1/ratio` of Nyquist for anti-aliasing.
pub fn resample(audio: &AudioBuffer, ratio: f64) -> Result<AudioBuffer, DspError> {
    if !ratio.is_finite() || !(0.25..=4.0).contains(&ratio) {
        return Err(DspError::RatioOutOfRange(ratio));
    }
    if ratio == 1.0 {
        return Ok(audio.clone());
    }

    let input = &audio.samples;
    let in_len = input.len() as isize;
    let out_len = (input.len() as f64 / ratio).round() as usize;
    let cutoff = if ratio > 1.0 { 1.0 / ratio } else { 1.0 };

    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = i as f64 * ratio;
        let center = pos.floor() as isize;
        let frac = pos - center as f64;

        let mut acc = 0.0f64;
        for t in (-HALF_TAPS + 1)..=HALF_TAPS {
            let idx = center + t;
            if idx < 0 || idx >= in_len {
                continue;
            }
            let u = t as f64 - frac;
            let w = blackman(u / HALF_TAPS as f64);
            acc += input[idx as usize] as f64 * cutoff * sinc(cutoff * u) * w;
        }
        out.push(acc.clamp(-1.0, 1.0) as f32);
    }

    Ok(AudioBuffer {
        samples: out,
        sample_rate: audio.sample_rate,
    })
}
