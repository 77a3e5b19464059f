//! WAV file I/O for the 16-bit signed PCM mono format used throughout the
//! toolkit, plus sample-rate conversion on ingest.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dsp::{resample, AudioBuffer, DspError};

/// Errors raised while reading or writing WAV files.
#[derive(Debug, Error)]
pub enum WavError {
    /// The container could not be opened, decoded, or encoded.
    #[error("{path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    /// The file decoded but is not 16-bit signed PCM mono.
    #[error("{path}: expected 16-bit signed PCM mono, found {found}")]
    Format { path: PathBuf, found: String },
    /// The decoded samples violate an audio invariant (rate, finiteness).
    #[error("{path}: {source}")]
    Audio {
        path: PathBuf,
        #[source]
        source: DspError,
    },
}

fn codec_err(path: &Path, source: hound::Error) -> WavError {
    WavError::Codec { path: path.to_path_buf(), source }
}

fn check_spec(path: &Path, spec: hound::WavSpec) -> Result<(), WavError> {
    let ok = spec.channels == 1
        && spec.bits_per_sample == 16
        && spec.sample_format == hound::SampleFormat::Int;
    if ok {
        return Ok(());
    }
    Err(WavError::Format {
        path: path.to_path_buf(),
        found: format!(
            "{} ch, {}-bit {}",
            spec.channels,
            spec.bits_per_sample,
            match spec.sample_format {
                hound::SampleFormat::Int => "int",
                hound::SampleFormat::Float => "float",
            }
        ),
    })
}

/// Reads a 16-bit signed PCM mono WAV file into an [`AudioBuffer`].
///
/// Samples are scaled to [-1, 1) by dividing by 32768. Any supported sample
/// rate is accepted; use [`read_wav_at`] to normalize the rate on ingest.
pub fn read_wav(path: &Path) -> Result<AudioBuffer, WavError> {
    let mut reader = hound::WavReader::open(path).map_err(|e| codec_err(path, e))?;
    let spec = reader.spec();
    check_spec(path, spec)?;
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| f32::from(v) / 32768.0))
        .collect::<Result<Vec<f32>, hound::Error>>()
        .map_err(|e| codec_err(path, e))?;
    AudioBuffer::new(samples, spec.sample_rate)
        .map_err(|e| WavError::Audio { path: path.to_path_buf(), source: e })
}

/// Reads a WAV file and converts it to `sample_rate` if it differs.
pub fn read_wav_at(path: &Path, sample_rate: u32) -> Result<AudioBuffer, WavError> {
    let audio = read_wav(path)?;
    convert_rate(&audio, sample_rate)
        .map_err(|e| WavError::Audio { path: path.to_path_buf(), source: e })
}

/// Writes an [`AudioBuffer`] as a 16-bit signed PCM mono WAV file.
///
/// Samples are scaled by 32768, rounded, and clamped to the 16-bit range,
/// mirroring the divide-by-32768 read scaling.
pub fn write_wav(path: &Path, audio: &AudioBuffer) -> Result<(), WavError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| codec_err(path, e))?;
    for &sample in &audio.samples {
        let scaled = (f64::from(sample) * 32768.0).round();
        let value = scaled.clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(value).map_err(|e| codec_err(path, e))?;
    }
    writer.finalize().map_err(|e| codec_err(path, e))
}

/// Returns a WAV file's duration in seconds from its header, without
/// decoding the sample data.
pub fn wav_duration_secs(path: &Path) -> Result<f64, WavError> {
    let reader = hound::WavReader::open(path).map_err(|e| codec_err(path, e))?;
    let spec = reader.spec();
    check_spec(path, spec)?;
    Ok(f64::from(reader.duration()) / f64::from(spec.sample_rate))
}

/// Converts `audio` to `sample_rate`, preserving pitch and duration.
///
/// Returns a clone when the rate already matches.
pub fn convert_rate(audio: &AudioBuffer, sample_rate: u32) -> Result<AudioBuffer, DspError> {
    if audio.sample_rate == sample_rate {
        return Ok(audio.clone());
    }
    // Playback-rate resampling at src/dst re-grids the waveform; relabeling
    // the rate afterwards keeps the content at its original pitch.
    let ratio = f64::from(audio.sample_rate) / f64::from(sample_rate);
    let regridded = resample(audio, ratio)?;
    AudioBuffer::new(regridded.samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, len: usize, rate: u32) -> AudioBuffer {
        let samples = (0..len)
            .map(|i| (0.6 * (2.0 * std::f64::consts::PI * freq * i as f64 / f64::from(rate)).sin()) as f32)
            .collect();
        AudioBuffer::new(samples, rate).unwrap()
    }

    #[test]
    fn round_trip_preserves_samples_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        let audio = tone(440.0, 1600, 16000);
        write_wav(&path, &audio).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16000);
        assert_eq!(back.samples.len(), audio.samples.len());
        for (a, b) in audio.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 0.5 / 32768.0, "{a} vs {b}");
        }
    }

    #[test]
    fn duration_probe_matches_sample_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probe.wav");
        write_wav(&path, &tone(200.0, 24000, 16000)).unwrap();
        let secs = wav_duration_secs(&path).unwrap();
        assert!((secs - 1.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_stereo_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..64 {
            writer.write_sample(0i16).unwrap();
            writer.write_sample(0i16).unwrap();
        }
        writer.finalize().unwrap();
        let err = read_wav(&path).unwrap_err();
        assert!(matches!(err, WavError::Format { .. }), "{err}");
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_wav(Path::new("/nonexistent/x.wav")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.wav"));
    }

    #[test]
    fn convert_rate_rescales_length_and_tags_rate() {
        let audio = tone(440.0, 22050, 22050);
        let converted = convert_rate(&audio, 16000).unwrap();
        assert_eq!(converted.sample_rate, 16000);
        assert_eq!(converted.samples.len(), 16000);
        assert!((converted.duration_secs() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn convert_rate_same_rate_is_identity() {
        let audio = tone(440.0, 800, 16000);
        let converted = convert_rate(&audio, 16000).unwrap();
        assert_eq!(converted.samples, audio.samples);
    }
}
