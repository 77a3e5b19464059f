//! Waveform-similarity overlap-add time-stretching.

use super::{AudioBuffer, DspError, WsolaParams};

/// Stretches duration by `factor` (0.5..=2) without changing pitch.
///
/// Segments are overlap-added with a linear crossfade; each segment's input
/// position is chosen within `±search_radius` of its nominal position to
/// maximize the normalized cross-correlation with the natural continuation of
/// the previously committed segment. Output length is exactly
/// `round(len * factor)`.
pub fn wsola_stretch(
    audio: &AudioBuffer,
    factor: f64,
    params: WsolaParams,
) -> Result<AudioBuffer, DspError> {
    if !factor.is_finite() || !(0.5..=2.0).contains(&factor) {
        return Err(DspError::FactorOutOfRange(factor));
    }
    let (seg, ov, search) = params.to_samples(audio.sample_rate)?;
    let input = &audio.samples;
    let in_len = input.len();
    if in_len < seg {
        return Err(DspError::AudioTooShort {
            len: in_len,
            min: seg,
        });
    }

    let target_len = (in_len as f64 * factor).round() as usize;
    let adv = seg - ov;
    let max_start = in_len - seg;
    let mut out = vec![0.0f32; target_len];

    // First segment is copied verbatim.
    let first = seg.min(target_len);
    out[..first].copy_from_slice(&input[..first]);

    let mut prev_start = 0usize;
    let mut out_pos = adv;
    while out_pos < target_len {
        let nominal = ((out_pos as f64 / factor).round() as usize).min(max_start);
        let lo = nominal.saturating_sub(search);
        let hi = (nominal + search).min(max_start);

        // Natural continuation of the previous segment at the output rate.
        let nat = prev_start + adv;
        let start = if nat + ov <= in_len {
            best_match(input, nat, nominal, lo, hi, ov)
        } else {
            nominal
        };

        overlap_add(&mut out, out_pos, &input[start..start + seg], ov);
        prev_start = start;
        out_pos += adv;
    }

    for s in &mut out {
        *s = s.clamp(-1.0, 1.0);
    }
    Ok(AudioBuffer {
        samples: out,
        sample_rate: audio.sample_rate,
    })
}

/// Candidate start in [lo, hi] whose first `ov` samples best correlate with
/// `input[nat..nat+ov]`. Ties go to the candidate closest to `nominal`, then
/// to the smaller index, so results are deterministic.
fn best_match(input: &[f32], nat: usize, nominal: usize, lo: usize, hi: usize, ov: usize) -> usize {
    let reference = &input[nat..nat + ov];
    let ref_energy: f64 = reference.iter().map(|&x| (x as f64) * (x as f64)).sum();

    let mut best = (f64::NEG_INFINITY, usize::MAX, lo);
    for s in lo..=hi {
        let cand = &input[s..s + ov];
        let mut dot = 0.0f64;
        let mut energy = 0.0f64;
        for (&r, &c) in reference.iter().zip(cand) {
            dot += r as f64 * c as f64;
            energy += c as f64 * c as f64;
        }
        let ncc = if ref_energy > 0.0 && energy > 0.0 {
            dot / (ref_energy * energy).sqrt()
        } else {
            0.0
        };
        let dist = s.abs_diff(nominal);
        if ncc > best.0 || (ncc == best.0 && dist < best.1) {
            best = (ncc, dist, s);
        }
    }
    best.2
}

fn overlap_add(out: &mut [f32], pos: usize, segment: &[f32], ov: usize) {
    for (i, &s) in segment.iter().enumerate() {
        let Some(slot) = out.get_mut(pos + i) else {
            break;
        };
        if i < ov {
            let alpha = (i + 1) as f32 / (ov + 1) as f32;
            *slot = *slot * (1.0 - alpha) + s * alpha;
        } else {
            *slot = s;
        }
    }
}
