//! Quality filtering of generated speech: score each utterance through a
//! recognition backend, then keep subsets by WER threshold or per-speaker
//! percentile.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::scoring::{self, Alignment, ScoringError};

/// The recognition outcome for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub utterance_id: String,
    pub wer_percent: f64,
    pub n_ref_words: usize,
    pub n_errors: usize,
}

/// Which granularity a quality level applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityMode {
    UtteranceThreshold,
    SpeakerPercentile,
}

impl QualityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            QualityMode::UtteranceThreshold => "utterance_threshold",
            QualityMode::SpeakerPercentile => "speaker_percentile",
        }
    }
}

impl fmt::Display for QualityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QualityMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "utterance_threshold" => Ok(QualityMode::UtteranceThreshold),
            "speaker_percentile" => Ok(QualityMode::SpeakerPercentile),
            other => Err(format!(
                "unknown quality mode \"{other}\" (expected utterance_threshold, speaker_percentile)"
            )),
        }
    }
}

/// A filtering level: mode plus a percentage in 10, 20, ..., 100.
///
/// Under `utterance_threshold` the level is a WER ceiling in percent; under
/// `speaker_percentile` it is the fraction of speakers kept, lowest pooled
/// WER first. Level 100 always keeps the whole corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityLevel {
    pub mode: QualityMode,
    pub level: u32,
}

impl QualityLevel {
    pub fn new(mode: QualityMode, level: u32) -> Result<Self, QualityError> {
        if level == 0 || level > 100 || level % 10 != 0 {
            return Err(QualityError::InvalidLevel { level });
        }
        Ok(QualityLevel { mode, level })
    }
}

/// Where hypotheses come from when scoring generated speech.
#[derive(Debug, Clone, PartialEq)]
pub enum AsrBackend {
    /// Hypothesis = reference transcript; every score is 0%.
    Echo,
    /// Hypotheses read from a fixed file in the scoring module's TSV format.
    Scripted { hypotheses: PathBuf },
    /// External recognizer: the command is invoked with two extra arguments,
    /// a TSV manifest of `<utterance_id>\t<absolute wav path>` lines and the
    /// path it must write hypotheses to (same TSV format as `Scripted`).
    Command { command: String },
}

/// Errors raised while scoring or filtering generated speech.
#[derive(Debug, Error)]
pub enum QualityError {
    #[error("quality level must be one of 10, 20, ..., 100; got {level}")]
    InvalidLevel { level: u32 },
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
    #[error("{path}:{line}: {reason}")]
    BadScore {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("failed to launch ASR command \"{command}\": {source}")]
    BackendLaunch {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("ASR command \"{command}\" exited with {status}: {stderr}")]
    BackendFailed {
        command: String,
        status: String,
        stderr: String,
    },
    #[error("utterance \"{utterance_id}\" has an empty reference after normalization")]
    EmptyReference { utterance_id: String },
    #[error("no score for utterance \"{utterance_id}\"")]
    MissingScore { utterance_id: String },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

/// Scores every utterance of `corpus` through `asr_backend`.
///
/// `audio_base` resolves relative manifest audio paths and `work_dir` holds
/// the manifest/hypothesis files exchanged with an external command; both are
/// only touched by the `Command` backend.
pub fn score_generated(
    corpus: &Corpus,
    asr_backend: &AsrBackend,
    audio_base: &Path,
    work_dir: &Path,
) -> Result<Vec<UtteranceScore>, QualityError> {
    let hypotheses = match asr_backend {
        AsrBackend::Echo => corpus
            .records
            .iter()
            .map(|r| (r.utterance_id.clone(), r.transcript.join(" ")))
            .collect(),
        AsrBackend::Scripted { hypotheses } => scoring::read_hypotheses(hypotheses)?,
        AsrBackend::Command { command } => {
            run_asr_command(corpus, command, audio_base, work_dir)?
        }
    };
    let alignments = scoring::align_corpus(corpus, &hypotheses)?;
    alignments.iter().map(score_from_alignment).collect()
}

fn score_from_alignment(alignment: &Alignment) -> Result<UtteranceScore, QualityError> {
    if alignment.counts.n_ref == 0 {
        return Err(QualityError::EmptyReference {
            utterance_id: alignment.utterance_id.clone(),
        });
    }
    let n_errors = alignment.counts.n_errors();
    Ok(UtteranceScore {
        utterance_id: alignment.utterance_id.clone(),
        wer_percent: 100.0 * n_errors as f64 / alignment.counts.n_ref as f64,
        n_ref_words: alignment.counts.n_ref,
        n_errors,
    })
}

fn run_asr_command(
    corpus: &Corpus,
    command: &str,
    audio_base: &Path,
    work_dir: &Path,
) -> Result<HashMap<String, String>, QualityError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| QualityError::Io { path, source }
    };
    std::fs::create_dir_all(work_dir).map_err(io_err(work_dir))?;

    let manifest_path = work_dir.join("asr_manifest.tsv");
    let mut manifest = String::new();
    for record in &corpus.records {
        let wav = audio_base.join(&record.audio_path);
        manifest.push_str(&format!("{}\t{}\n", record.utterance_id, wav.display()));
    }
    std::fs::write(&manifest_path, manifest).map_err(io_err(&manifest_path))?;

    let hyp_path = work_dir.join("asr_hypotheses.tsv");
    let mut parts = command.split_whitespace();
    let program = parts.next().ok_or_else(|| QualityError::BackendLaunch {
        command: command.to_owned(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty command"),
    })?;
    let output = Command::new(program)
        .args(parts)
        .arg(&manifest_path)
        .arg(&hyp_path)
        .output()
        .map_err(|source| QualityError::BackendLaunch {
            command: command.to_owned(),
            source,
        })?;
    if !output.status.success() {
        return Err(QualityError::BackendFailed {
            command: command.to_owned(),
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_owned(),
        });
    }
    Ok(scoring::read_hypotheses(&hyp_path)?)
}

/// Keeps the subset of `corpus` passing `level`.
///
/// `utterance_threshold` keeps utterances with WER no greater than the level;
/// `speaker_percentile` ranks speakers by pooled WER (total errors over total
/// reference words, so long utterances weigh more) and keeps the utterances
/// of the best ceil(level% x speakers). Output at level L is always a subset
/// of output at any higher level, and level 100 returns `corpus` unchanged.
pub fn filter_by_level(
    scores: &[UtteranceScore],
    corpus: &Corpus,
    level: QualityLevel,
) -> Result<Corpus, QualityError> {
    let by_id: HashMap<&str, &UtteranceScore> =
        scores.iter().map(|s| (s.utterance_id.as_str(), s)).collect();
    for record in &corpus.records {
        if !by_id.contains_key(record.utterance_id.as_str()) {
            return Err(QualityError::MissingScore {
                utterance_id: record.utterance_id.clone(),
            });
        }
    }
    if level.level == 100 {
        return Ok(corpus.clone());
    }
    match level.mode {
        QualityMode::UtteranceThreshold => {
            let ceiling = f64::from(level.level);
            Ok(corpus.retain(|r| by_id[r.utterance_id.as_str()].wer_percent <= ceiling))
        }
        QualityMode::SpeakerPercentile => {
            let mut totals: HashMap<&str, (usize, usize)> = HashMap::new();
            for record in &corpus.records {
                let score = by_id[record.utterance_id.as_str()];
                let entry = totals.entry(record.speaker_id.as_str()).or_default();
                entry.0 += score.n_errors;
                entry.1 += score.n_ref_words;
            }
            let mut ranked: Vec<(&str, f64)> = totals
                .iter()
                .map(|(&speaker, &(errors, refs))| {
                    (speaker, 100.0 * errors as f64 / refs as f64)
                })
                .collect();
            ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
            let n_keep = (level.level as usize * ranked.len() + 99) / 100;
            let kept: Vec<&str> = ranked[..n_keep].iter().map(|&(s, _)| s).collect();
            Ok(corpus.retain(|r| kept.contains(&r.speaker_id.as_str())))
        }
    }
}

/// Writes scores as JSONL, one object per line.
pub fn write_scores(path: &Path, scores: &[UtteranceScore]) -> Result<(), QualityError> {
    let io_err = |source| QualityError::Io { path: path.to_path_buf(), source };
    let mut out = Vec::new();
    for score in scores {
        let line = serde_json::to_string(score).expect("score serialization cannot fail");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    std::fs::write(path, out).map_err(io_err)
}

/// Reads a JSONL score file, checking each WER against its counts.
pub fn read_scores(path: &Path) -> Result<Vec<UtteranceScore>, QualityError> {
    let io_err = |source| QualityError::Io { path: path.to_path_buf(), source };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut scores = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let score: UtteranceScore =
            serde_json::from_str(&line).map_err(|source| QualityError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })?;
        let bad = |reason: String| QualityError::BadScore {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        if score.n_ref_words == 0 {
            return Err(bad(format!(
                "utterance \"{}\" has zero reference words",
                score.utterance_id
            )));
        }
        let expected = 100.0 * score.n_errors as f64 / score.n_ref_words as f64;
        if (score.wer_percent - expected).abs() > 1e-6 {
            return Err(bad(format!(
                "wer_percent {} does not match {} error(s) over {} word(s)",
                score.wer_percent, score.n_errors, score.n_ref_words
            )));
        }
        scores.push(score);
    }
    Ok(scores)
}
