//! Text normalization, Levenshtein alignment, and word-error-rate
//! aggregation with per-style and pooled reporting.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, Style};
use crate::exec;

/// One edit operation in an alignment path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Match,
    Substitution,
    Insertion,
    Deletion,
}

/// An alignment step carrying the tokens it consumes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignOp {
    pub kind: OpKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ref_token: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyp_token: Option<String>,
}

/// Edit counts for one alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EditCounts {
    pub n_ref: usize,
    pub n_sub: usize,
    pub n_ins: usize,
    pub n_del: usize,
    pub n_match: usize,
}

impl EditCounts {
    pub fn n_errors(&self) -> usize {
        self.n_sub + self.n_ins + self.n_del
    }
}

/// A minimum-edit-distance path between one reference and one hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alignment {
    pub utterance_id: String,
    pub ops: Vec<AlignOp>,
    pub counts: EditCounts,
}

/// One row of a score report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub name: String,
    pub n_ref_words: usize,
    pub n_errors: usize,
    pub wer_percent: f64,
}

/// Aggregated WER report: per-style rows, the pooled row, and a per-speaker
/// breakdown.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
    pub pooled: ScoreRow,
    pub per_speaker: Vec<ScoreRow>,
}

/// Errors raised while scoring hypotheses.
#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected \"<utterance_id>\\t<hypothesis text>\"")]
    BadHypothesisLine { path: PathBuf, line: usize },
    #[error("duplicate hypothesis for utterance \"{utterance_id}\"")]
    DuplicateHypothesis { utterance_id: String },
    #[error("missing hypothesis for utterance \"{utterance_id}\"")]
    MissingHypothesis { utterance_id: String },
    #[error("cannot compute WER over zero reference words")]
    ZeroReferenceWords,
}

/// Lowercases, strips punctuation except apostrophes and hyphens attached to
/// word characters, and splits on whitespace. Tokens without any alphanumeric
/// character are dropped.
pub fn normalize_text(raw: &str) -> Vec<String> {
    raw.to_lowercase()
        .split_whitespace()
        .filter_map(|word| {
            let token: String = word
                .chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'' || *c == '-')
                .collect();
            token.chars().any(char::is_alphanumeric).then_some(token)
        })
        .collect()
}

/// Aligns a hypothesis against a reference with unit edit costs.
///
/// Backtrace ties resolve in the priority order match, substitution,
/// deletion, insertion, so the path is deterministic.
pub fn align(utterance_id: &str, reference: &[String], hypothesis: &[String]) -> Alignment {
    let n_ref = reference.len();
    let n_hyp = hypothesis.len();
    let width = n_hyp + 1;
    let mut dist = vec![0u32; (n_ref + 1) * width];
    for j in 0..=n_hyp {
        dist[j] = j as u32;
    }
    for i in 1..=n_ref {
        dist[i * width] = i as u32;
        for j in 1..=n_hyp {
            let same = reference[i - 1] == hypothesis[j - 1];
            let diagonal = dist[(i - 1) * width + j - 1] + u32::from(!same);
            let up = dist[(i - 1) * width + j] + 1;
            let left = dist[i * width + j - 1] + 1;
            dist[i * width + j] = diagonal.min(up).min(left);
        }
    }

    let mut ops = Vec::with_capacity(n_ref.max(n_hyp));
    let mut counts = EditCounts { n_ref, ..EditCounts::default() };
    let (mut i, mut j) = (n_ref, n_hyp);
    while i > 0 || j > 0 {
        let here = dist[i * width + j];
        let same = i > 0 && j > 0 && reference[i - 1] == hypothesis[j - 1];
        if same && dist[(i - 1) * width + j - 1] == here {
            ops.push(AlignOp {
                kind: OpKind::Match,
                ref_token: Some(reference[i - 1].clone()),
                hyp_token: Some(hypothesis[j - 1].clone()),
            });
            counts.n_match += 1;
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && !same && dist[(i - 1) * width + j - 1] + 1 == here {
            ops.push(AlignOp {
                kind: OpKind::Substitution,
                ref_token: Some(reference[i - 1].clone()),
                hyp_token: Some(hypothesis[j - 1].clone()),
            });
            counts.n_sub += 1;
            i -= 1;
            j -= 1;
        } else if i > 0 && dist[(i - 1) * width + j] + 1 == here {
            ops.push(AlignOp {
                kind: OpKind::Deletion,
                ref_token: Some(reference[i - 1].clone()),
                hyp_token: None,
            });
            counts.n_del += 1;
            i -= 1;
        } else {
            ops.push(AlignOp {
                kind: OpKind::Insertion,
                ref_token: None,
                hyp_token: Some(hypothesis[j - 1].clone()),
            });
            counts.n_ins += 1;
            j -= 1;
        }
    }
    ops.reverse();
    Alignment { utterance_id: utterance_id.to_owned(), ops, counts }
}

/// Sums counts over alignments and computes the corpus-level WER row:
/// total errors divided by total reference words, never a per-utterance
/// average.
pub fn wer(name: &str, alignments: &[Alignment]) -> Result<ScoreRow, ScoringError> {
    let n_ref_words: usize = alignments.iter().map(|a| a.counts.n_ref).sum();
    if n_ref_words == 0 {
        return Err(ScoringError::ZeroReferenceWords);
    }
    let n_errors: usize = alignments.iter().map(|a| a.counts.n_errors()).sum();
    Ok(ScoreRow {
        name: name.to_owned(),
        n_ref_words,
        n_errors,
        wer_percent: 100.0 * n_errors as f64 / n_ref_words as f64,
    })
}

/// Parses a hypothesis file of `<utterance_id>\t<text>` lines.
pub fn read_hypotheses(path: &Path) -> Result<HashMap<String, String>, ScoringError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScoringError::Io { path: path.to_path_buf(), source })?;
    let mut hypotheses = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let (utterance_id, hyp) =
            line.split_once('\t').ok_or_else(|| ScoringError::BadHypothesisLine {
                path: path.to_path_buf(),
                line: idx + 1,
            })?;
        if hypotheses.insert(utterance_id.to_owned(), hyp.to_owned()).is_some() {
            return Err(ScoringError::DuplicateHypothesis {
                utterance_id: utterance_id.to_owned(),
            });
        }
    }
    Ok(hypotheses)
}

/// Aligns every corpus record against its hypothesis. Both sides pass
/// through [`normalize_text`] so manifests stay normalization-agnostic.
pub fn align_corpus(
    corpus: &Corpus,
    hypotheses: &HashMap<String, String>,
) -> Result<Vec<Alignment>, ScoringError> {
    for record in &corpus.records {
        if !hypotheses.contains_key(&record.utterance_id) {
            return Err(ScoringError::MissingHypothesis {
                utterance_id: record.utterance_id.clone(),
            });
        }
    }
    Ok(exec::map(&corpus.records, |record| {
        let reference = normalize_text(&record.transcript.join(" "));
        let hypothesis = normalize_text(&hypotheses[&record.utterance_id]);
        align(&record.utterance_id, &reference, &hypothesis)
    }))
}

/// Scores a hypothesis file against a corpus: one row per style present,
/// a pooled row named "Avg.", and a per-speaker breakdown.
pub fn score_hypotheses(corpus: &Corpus, hyp_path: &Path) -> Result<ScoreReport, ScoringError> {
    let hypotheses = read_hypotheses(hyp_path)?;
    let alignments = align_corpus(corpus, &hypotheses)?;
    let by_id: HashMap<&str, &Alignment> =
        alignments.iter().map(|a| (a.utterance_id.as_str(), a)).collect();

    let mut rows = Vec::new();
    for style in [Style::Read, Style::Hmi, Style::Spontaneous] {
        let subset: Vec<Alignment> = corpus
            .records
            .iter()
            .filter(|r| r.style == style)
            .map(|r| by_id[r.utterance_id.as_str()].clone())
            .collect();
        if !subset.is_empty() {
            rows.push(wer(style.as_str(), &subset)?);
        }
    }
    let pooled = wer("Avg.", &alignments)?;

    let mut per_speaker = Vec::new();
    let mut speakers: Vec<&str> = corpus.speakers.iter().map(|p| p.speaker_id.as_str()).collect();
    speakers.sort_unstable();
    for speaker_id in speakers {
        let subset: Vec<Alignment> = corpus
            .records
            .iter()
            .filter(|r| r.speaker_id == speaker_id)
            .map(|r| by_id[r.utterance_id.as_str()].clone())
            .collect();
        if !subset.is_empty() {
            per_speaker.push(wer(speaker_id, &subset)?);
        }
    }
    Ok(ScoreReport { rows, pooled, per_speaker })
}
