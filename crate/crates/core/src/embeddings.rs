//! Speaker embeddings: ingestion of externally computed vectors, a
//! deterministic built-in acoustic summary, and cosine-similarity matrices.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{estimate_f0, mel_spectrogram, AudioBuffer, DspError, LOG_FLOOR};
use crate::exec;

/// Dimension of the built-in acoustic-summary embedding.
pub const EMBEDDING_DIM: usize = 50;

const N_MELS: usize = 24;
const MEL_FRAME_SECS: f64 = 0.025;
/// F0 analysis window, long enough for two periods at the lowest target F0.
pub const F0_FRAME_SECS: f64 = 0.040;
/// Hop between analysis frames.
pub const HOP_SECS: f64 = 0.010;
const MIN_FEATURE_FRAMES: usize = 10;

/// Where an embedding vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSource {
    Imported,
    AcousticSummary,
}

/// A speaker's fixed-dimension embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub speaker_id: String,
    pub vector: Vec<f64>,
    pub source: EmbeddingSource,
}

/// Cosine similarities for every source-target speaker pair, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub source_ids: Vec<String>,
    pub target_ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    /// The similarity for a source/target id pair, if both are present.
    pub fn lookup(&self, source_id: &str, target_id: &str) -> Option<f64> {
        let row = self.source_ids.iter().position(|s| s == source_id)?;
        let col = self.target_ids.iter().position(|t| t == target_id)?;
        Some(self.values[row][col])
    }
}

/// Errors raised by embedding computation, comparison, and file I/O.
#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding for \"{speaker_id}\" has zero norm")]
    ZeroNorm { speaker_id: String },
    #[error("embedding for \"{speaker_id}\" has a non-finite component")]
    NonFinite { speaker_id: String },
    #[error("no usable frames across {utterances} utterance(s): no voiced frame and fewer than {MIN_FEATURE_FRAMES} non-silent feature frames")]
    NoUsableFrames { utterances: usize },
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: duplicate speaker_id \"{speaker_id}\"")]
    DuplicateSpeaker { path: PathBuf, speaker_id: String },
    #[error("{path}: similarity matrix shape is inconsistent")]
    BadMatrixShape { path: PathBuf },
}

/// Cosine similarity dot(a,b) / (|a| |b|), clamped into [-1, 1].
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64, EmbeddingError> {
    if a.vector.len() != b.vector.len() {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.vector.len(),
            right: b.vector.len(),
        });
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (&x, &y) in a.vector.iter().zip(&b.vector) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 {
        return Err(EmbeddingError::ZeroNorm { speaker_id: a.speaker_id.clone() });
    }
    if norm_b == 0.0 {
        return Err(EmbeddingError::ZeroNorm { speaker_id: b.speaker_id.clone() });
    }
    Ok((dot / (norm_a.sqrt() * norm_b.sqrt())).clamp(-1.0, 1.0))
}

/// Computes the full source x target cosine-similarity matrix, one row per
/// source in input order.
pub fn build_similarity_matrix(
    sources: &[Embedding],
    targets: &[Embedding],
) -> Result<SimilarityMatrix, EmbeddingError> {
    let values = exec::try_map(sources, |source| {
        targets.iter().map(|target| cosine_similarity(source, target)).collect()
    })?;
    Ok(SimilarityMatrix {
        source_ids: sources.iter().map(|e| e.speaker_id.clone()).collect(),
        target_ids: targets.iter().map(|e| e.speaker_id.clone()).collect(),
        values,
    })
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Builds the deterministic 50-dimensional acoustic-summary embedding:
/// per-bin mean and population standard deviation of the 24-bin log-mel
/// spectrogram, median F0 normalized by 500 Hz (0 when fully unvoiced), and
/// the voiced-frame fraction. Statistics are pooled over all utterances, so
/// the result is invariant to utterance order and duplication.
pub fn acoustic_summary_embedding(
    speaker_id: &str,
    utterances: &[AudioBuffer],
) -> Result<Embedding, EmbeddingError> {
    if utterances.is_empty() {
        return Err(EmbeddingError::NoUsableFrames { utterances: 0 });
    }
    let mut frames: Vec<Vec<f64>> = Vec::new();
    let mut non_silent_frames = 0usize;
    let mut voiced: Vec<f64> = Vec::new();
    let mut f0_frames = 0usize;
    let silence_level = LOG_FLOOR.ln() + 1e-9;

    for audio in utterances {
        let mel = mel_spectrogram(audio, N_MELS, MEL_FRAME_SECS, HOP_SECS)?;
        for frame in &mel {
            if frame.iter().any(|&e| e > silence_level) {
                non_silent_frames += 1;
            }
        }
        frames.extend(mel);
        let track = estimate_f0(audio, F0_FRAME_SECS, HOP_SECS)?;
        f0_frames += track.values.len();
        voiced.extend(track.values.iter().flatten());
    }

    if voiced.is_empty() && non_silent_frames < MIN_FEATURE_FRAMES {
        return Err(EmbeddingError::NoUsableFrames { utterances: utterances.len() });
    }

    // Two-pass mean/variance: the one-pass form cancels catastrophically on
    // near-constant bins sitting at the log floor.
    let n = frames.len() as f64;
    let mut means = vec![0.0f64; N_MELS];
    for frame in &frames {
        for (bin, &energy) in frame.iter().enumerate() {
            means[bin] += energy;
        }
    }
    for mean in &mut means {
        *mean /= n;
    }
    let mut variances = vec![0.0f64; N_MELS];
    for frame in &frames {
        for (bin, &energy) in frame.iter().enumerate() {
            let dev = energy - means[bin];
            variances[bin] += dev * dev;
        }
    }
    let mut vector = Vec::with_capacity(EMBEDDING_DIM);
    vector.extend_from_slice(&means);
    for variance in &variances {
        vector.push((variance / n).sqrt());
    }
    voiced.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_f0 = if voiced.is_empty() { 0.0 } else { median(&voiced) };
    vector.push(median_f0 / 500.0);
    vector.push(voiced.len() as f64 / f0_frames as f64);

    Ok(Embedding {
        speaker_id: speaker_id.to_owned(),
        vector,
        source: EmbeddingSource::AcousticSummary,
    })
}

#[derive(Serialize, Deserialize)]
struct EmbeddingLine {
    speaker_id: String,
    vector: Vec<f64>,
}

fn check_vector(speaker_id: &str, vector: &[f64]) -> Result<(), EmbeddingError> {
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFinite { speaker_id: speaker_id.to_owned() });
    }
    if vector.iter().all(|&v| v == 0.0) {
        return Err(EmbeddingError::ZeroNorm { speaker_id: speaker_id.to_owned() });
    }
    Ok(())
}

/// Reads a JSONL embedding file of `{"speaker_id", "vector"}` objects,
/// validating finiteness and nonzero norm.
pub fn read_embeddings(path: &Path) -> Result<Vec<Embedding>, EmbeddingError> {
    let io_err = |source| EmbeddingError::Io { path: path.to_path_buf(), source };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut embeddings: Vec<Embedding> = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EmbeddingLine =
            serde_json::from_str(&line).map_err(|source| EmbeddingError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                source,
            })?;
        check_vector(&parsed.speaker_id, &parsed.vector)?;
        if embeddings.iter().any(|e| e.speaker_id == parsed.speaker_id) {
            return Err(EmbeddingError::DuplicateSpeaker {
                path: path.to_path_buf(),
                speaker_id: parsed.speaker_id,
            });
        }
        embeddings.push(Embedding {
            speaker_id: parsed.speaker_id,
            vector: parsed.vector,
            source: EmbeddingSource::Imported,
        });
    }
    Ok(embeddings)
}

/// Writes embeddings as JSONL `{"speaker_id", "vector"}` lines.
pub fn write_embeddings(path: &Path, embeddings: &[Embedding]) -> Result<(), EmbeddingError> {
    let io_err = |source| EmbeddingError::Io { path: path.to_path_buf(), source };
    let mut out = String::new();
    for embedding in embeddings {
        let line = EmbeddingLine {
            speaker_id: embedding.speaker_id.clone(),
            vector: embedding.vector.clone(),
        };
        out.push_str(&serde_json::to_string(&line).map_err(|source| EmbeddingError::Parse {
            path: path.to_path_buf(),
            line: 0,
            source,
        })?);
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(out.as_bytes()).map_err(io_err)
}

/// Reads a similarity matrix persisted by [`write_similarity_matrix`].
pub fn read_similarity_matrix(path: &Path) -> Result<SimilarityMatrix, EmbeddingError> {
    let io_err = |source| EmbeddingError::Io { path: path.to_path_buf(), source };
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    let matrix: SimilarityMatrix =
        serde_json::from_str(&text).map_err(|source| EmbeddingError::Parse {
            path: path.to_path_buf(),
            line: 1,
            source,
        })?;
    let shape_ok = matrix.values.len() == matrix.source_ids.len()
        && matrix.values.iter().all(|row| row.len() == matrix.target_ids.len());
    if !shape_ok {
        return Err(EmbeddingError::BadMatrixShape { path: path.to_path_buf() });
    }
    Ok(matrix)
}

/// Writes a similarity matrix as a single JSON document.
pub fn write_similarity_matrix(
    path: &Path,
    matrix: &SimilarityMatrix,
) -> Result<(), EmbeddingError> {
    let io_err = |source| EmbeddingError::Io { path: path.to_path_buf(), source };
    let mut text = serde_json::to_string(matrix).map_err(|source| EmbeddingError::Parse {
        path: path.to_path_buf(),
        line: 0,
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embedding(speaker_id: &str, vector: &[f64]) -> Embedding {
        Embedding {
            speaker_id: speaker_id.to_owned(),
            vector: vector.to_vec(),
            source: EmbeddingSource::Imported,
        }
    }

    fn tone(freq: f64, amplitude: f64, secs: f64) -> AudioBuffer {
        let rate = 16000;
        let len = (secs * f64::from(rate)) as usize;
        let samples = (0..len)
            .map(|i| {
                (amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / f64::from(rate)).sin())
                    as f32
            })
            .collect();
        AudioBuffer::new(samples, rate).unwrap()
    }

    #[test]
    fn cosine_of_identical_vectors_is_one() {
        let a = embedding("a", &[0.3, -1.2, 4.0, 2.5]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_of_orthogonal_vectors_is_zero() {
        let a = embedding("a", &[1.0, 0.0]);
        let b = embedding("b", &[0.0, 1.0]);
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn cosine_matches_hand_arithmetic() {
        let a = embedding("a", &[1.0, 2.0, 2.0]);
        let b = embedding("b", &[2.0, 1.0, 2.0]);
        let sim = cosine_similarity(&a, &b).unwrap();
        assert!((sim - 8.0 / 9.0).abs() < 1e-9, "{sim}");
    }

    #[test]
    fn cosine_is_scale_invariant() {
        let a = embedding("a", &[0.5, -2.0, 1.5]);
        let up = embedding("b", &a.vector.iter().map(|v| v * 3.0).collect::<Vec<_>>());
        let flipped = embedding("c", &a.vector.iter().map(|v| v * -2.0).collect::<Vec<_>>());
        assert!((cosine_similarity(&a, &up).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine_similarity(&a, &flipped).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_rejects_mismatch_and_zero_norm() {
        let a = embedding("a", &[1.0, 2.0]);
        let b = embedding("b", &[1.0, 2.0, 3.0]);
        assert!(matches!(
            cosine_similarity(&a, &b),
            Err(EmbeddingError::DimensionMismatch { left: 2, right: 3 })
        ));
        let zero = embedding("z", &[0.0, 0.0]);
        assert!(matches!(
            cosine_similarity(&a, &zero),
            Err(EmbeddingError::ZeroNorm { .. })
        ));
    }

    #[test]
    fn matrix_of_orthonormal_basis_is_identity() {
        let basis = vec![
            embedding("e1", &[1.0, 0.0, 0.0]),
            embedding("e2", &[0.0, 1.0, 0.0]),
            embedding("e3", &[0.0, 0.0, 1.0]),
        ];
        let matrix = build_similarity_matrix(&basis, &basis).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_eq!(matrix.values[i][j], expected);
            }
        }
        let single = build_similarity_matrix(&basis[..1], &basis[..1]).unwrap();
        assert!((single.values[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_matches_pairwise_oracle() {
        let sources = vec![
            embedding("s1", &[3.0, 1.0, -2.0]),
            embedding("s2", &[0.0, 4.0, 5.0]),
            embedding("s3", &[-1.0, -1.0, 2.0]),
        ];
        let targets = vec![
            embedding("t1", &[2.0, 2.0, 1.0]),
            embedding("t2", &[-3.0, 0.0, 4.0]),
            embedding("t3", &[1.0, 5.0, -1.0]),
        ];
        let matrix = build_similarity_matrix(&sources, &targets).unwrap();
        for (i, s) in sources.iter().enumerate() {
            for (j, t) in targets.iter().enumerate() {
                let dot: f64 = s.vector.iter().zip(&t.vector).map(|(x, y)| x * y).sum();
                let ns: f64 = s.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nt: f64 = t.vector.iter().map(|y| y * y).sum::<f64>().sqrt();
                assert!((matrix.values[i][j] - dot / (ns * nt)).abs() < 1e-12);
            }
        }
        assert_eq!(matrix.lookup("s2", "t3"), Some(matrix.values[1][2]));
        assert_eq!(matrix.lookup("s2", "nope"), None);
    }

    #[test]
    fn summary_embedding_has_dimension_50() {
        let audio = tone(150.0, 0.5, 1.0);
        let embedding = acoustic_summary_embedding("spk", &[audio]).unwrap();
        assert_eq!(embedding.vector.len(), EMBEDDING_DIM);
        assert_eq!(embedding.source, EmbeddingSource::AcousticSummary);
        assert!(embedding.vector.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn summary_embedding_is_duplication_invariant() {
        let audio = tone(200.0, 0.4, 0.8);
        let once = acoustic_summary_embedding("spk", &[audio.clone()]).unwrap();
        let twice = acoustic_summary_embedding("spk", &[audio.clone(), audio]).unwrap();
        for (a, b) in once.vector.iter().zip(&twice.vector) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn summary_embedding_is_permutation_invariant() {
        let a = tone(180.0, 0.5, 0.6);
        let b = tone(320.0, 0.3, 0.9);
        let ab = acoustic_summary_embedding("spk", &[a.clone(), b.clone()]).unwrap();
        let ba = acoustic_summary_embedding("spk", &[b, a]).unwrap();
        for (x, y) in ab.vector.iter().zip(&ba.vector) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn same_pitch_speakers_are_more_similar_than_distant_pitches() {
        let low = acoustic_summary_embedding("low", &[tone(150.0, 0.5, 1.0)]).unwrap();
        let low_quiet = acoustic_summary_embedding("lowq", &[tone(150.0, 0.2, 1.0)]).unwrap();
        let high = acoustic_summary_embedding("high", &[tone(400.0, 0.5, 1.0)]).unwrap();
        let same_pitch = cosine_similarity(&low, &low_quiet).unwrap();
        let cross_pitch = cosine_similarity(&low, &high).unwrap();
        assert!(
            cross_pitch < same_pitch,
            "cross {cross_pitch} should be below same-pitch {same_pitch}"
        );
    }

    #[test]
    fn silence_only_input_errors() {
        let silence = AudioBuffer::new(vec![0.0; 16000], 16000).unwrap();
        assert!(matches!(
            acoustic_summary_embedding("spk", &[silence]),
            Err(EmbeddingError::NoUsableFrames { utterances: 1 })
        ));
        assert!(matches!(
            acoustic_summary_embedding("spk", &[]),
            Err(EmbeddingError::NoUsableFrames { utterances: 0 })
        ));
    }

    #[test]
    fn embedding_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let embeddings = vec![
            embedding("spk_a", &[1.0, 2.5, -0.75]),
            embedding("spk_b", &[0.125, 0.0, 3.0]),
        ];
        write_embeddings(&path, &embeddings).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].speaker_id, "spk_a");
        assert_eq!(back[0].vector, embeddings[0].vector);
        assert_eq!(back[0].source, EmbeddingSource::Imported);
    }

    #[test]
    fn embedding_file_rejects_bad_vectors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"speaker_id\":\"z\",\"vector\":[0.0,0.0]}\n").unwrap();
        assert!(matches!(read_embeddings(&path), Err(EmbeddingError::ZeroNorm { .. })));
        std::fs::write(
            &path,
            "{\"speaker_id\":\"a\",\"vector\":[1.0]}\n{\"speaker_id\":\"a\",\"vector\":[2.0]}\n",
        )
        .unwrap();
        assert!(matches!(read_embeddings(&path), Err(EmbeddingError::DuplicateSpeaker { .. })));
    }

    #[test]
    fn similarity_matrix_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sim.json");
        let matrix = SimilarityMatrix {
            source_ids: vec!["s1".into(), "s2".into()],
            target_ids: vec!["t1".into(), "t2".into(), "t3".into()],
            values: vec![vec![0.9, 0.5, 0.1], vec![-0.25, 0.0, 1.0]],
        };
        write_similarity_matrix(&path, &matrix).unwrap();
        assert_eq!(read_similarity_matrix(&path).unwrap(), matrix);
        std::fs::write(
            &path,
            "{\"source_ids\":[\"s1\"],\"target_ids\":[\"t1\"],\"values\":[[0.5],[0.5]]}",
        )
        .unwrap();
        assert!(matches!(
            read_similarity_matrix(&path),
            Err(EmbeddingError::BadMatrixShape { .. })
        ));
    }
}
