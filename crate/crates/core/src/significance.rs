//! MAPSSWE matched-pairs sentence-segment significance testing between two
//! systems scored against a common reference.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::scoring::{align_corpus, Alignment, OpKind, ScoringError};

/// A maximal run of reference positions where at least one system errs,
/// bounded by positions both systems got right or by utterance boundaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorSegment {
    pub utterance_id: String,
    /// 1-based inclusive reference-position span.
    pub start: usize,
    pub end: usize,
    pub n_errors_a: u32,
    pub n_errors_b: u32,
}

impl ErrorSegment {
    /// Per-segment error difference, system A minus system B.
    pub fn z(&self) -> i64 {
        i64::from(self.n_errors_a) - i64::from(self.n_errors_b)
    }
}

/// Significance tiers for the star annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Stars {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "*")]
    One,
    #[serde(rename = "**")]
    Two,
    #[serde(rename = "***")]
    Three,
}

impl fmt::Display for Stars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            Stars::None => "",
            Stars::One => "*",
            Stars::Two => "**",
            Stars::Three => "***",
        };
        f.write_str(text)
    }
}

/// The outcome of a MAPSSWE run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapssweResult {
    pub n_segments: usize,
    pub mean_z: f64,
    /// Unbiased (n - 1) variance of the per-segment differences.
    pub var_z: f64,
    #[serde(rename = "w", serialize_with = "serialize_w")]
    pub w_statistic: f64,
    #[serde(rename = "p")]
    pub p_value: f64,
    pub stars: Stars,
}

fn serialize_w<S: Serializer>(w: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    if w.is_finite() {
        serializer.serialize_f64(*w)
    } else if *w > 0.0 {
        serializer.serialize_str("inf")
    } else {
        serializer.serialize_str("-inf")
    }
}

impl MapssweResult {
    /// One-line human-readable summary.
    pub fn verdict(&self) -> String {
        let p_text = if self.p_value <= 1e-12 {
            "p < 1e-12".to_owned()
        } else if self.p_value < 1e-4 {
            format!("p = {:.3e}", self.p_value)
        } else {
            format!("p = {:.4}", self.p_value)
        };
        let w_text = if self.w_statistic.is_finite() {
            format!("W = {:.4}", self.w_statistic)
        } else {
            format!("W = {}", if self.w_statistic > 0.0 { "inf" } else { "-inf" })
        };
        match self.stars {
            Stars::None => format!("{w_text}, {p_text}: not significant"),
            tier => format!("{w_text}, {p_text}: significant ({tier})"),
        }
    }
}

/// Errors raised during significance testing.
#[derive(Debug, Error)]
pub enum SignificanceError {
    #[error("need at least 2 error segments, found {found}")]
    TooFewSegments { found: usize },
    #[error("utterance \"{utterance_id}\": systems were marked against different reference lengths ({len_a} vs {len_b})")]
    MarkMismatch {
        utterance_id: String,
        len_a: usize,
        len_b: usize,
    },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

/// Projects an alignment's errors onto reference positions.
///
/// Substitutions and deletions mark the reference position they consume;
/// insertions attach to the following reference position, and an
/// utterance-final insertion to the last one. An empty reference keeps a
/// single pseudo-position so insertion errors are never lost.
pub fn project_errors(alignment: &Alignment) -> Vec<u32> {
    let mut marks = vec![0u32; alignment.counts.n_ref.max(1)];
    let last = marks.len() - 1;
    let mut pos = 0usize;
    for op in &alignment.ops {
        match op.kind {
            OpKind::Match => pos += 1,
            OpKind::Substitution | OpKind::Deletion => {
                marks[pos] += 1;
                pos += 1;
            }
            OpKind::Insertion => marks[pos.min(last)] += 1,
        }
    }
    marks
}

/// Builds maximal error segments from two systems' per-position marks over
/// the same reference.
pub fn build_segments(
    utterance_id: &str,
    marks_a: &[u32],
    marks_b: &[u32],
) -> Result<Vec<ErrorSegment>, SignificanceError> {
    if marks_a.len() != marks_b.len() {
        return Err(SignificanceError::MarkMismatch {
            utterance_id: utterance_id.to_owned(),
            len_a: marks_a.len(),
            len_b: marks_b.len(),
        });
    }
    let mut segments = Vec::new();
    let mut open: Option<ErrorSegment> = None;
    for (i, (&a, &b)) in marks_a.iter().zip(marks_b).enumerate() {
        if a == 0 && b == 0 {
            if let Some(segment) = open.take() {
                segments.push(segment);
            }
            continue;
        }
        match &mut open {
            Some(segment) => {
                segment.end = i + 1;
                segment.n_errors_a += a;
                segment.n_errors_b += b;
            }
            None => {
                open = Some(ErrorSegment {
                    utterance_id: utterance_id.to_owned(),
                    start: i + 1,
                    end: i + 1,
                    n_errors_a: a,
                    n_errors_b: b,
                });
            }
        }
    }
    if let Some(segment) = open {
        segments.push(segment);
    }
    Ok(segments)
}

/// Aligns both hypothesis sets against the corpus and collects error
/// segments in record order.
pub fn segments_for_corpus(
    corpus: &Corpus,
    hypotheses_a: &HashMap<String, String>,
    hypotheses_b: &HashMap<String, String>,
) -> Result<Vec<ErrorSegment>, SignificanceError> {
    let alignments_a = align_corpus(corpus, hypotheses_a)?;
    let alignments_b = align_corpus(corpus, hypotheses_b)?;
    let mut segments = Vec::new();
    for (a, b) in alignments_a.iter().zip(&alignments_b) {
        let marks_a = project_errors(a);
        let marks_b = project_errors(b);
        segments.extend(build_segments(&a.utterance_id, &marks_a, &marks_b)?);
    }
    Ok(segments)
}

/// Runs the matched-pairs test over the segments: W = mean / sqrt(var / n)
/// against a standard normal, two-sided.
///
/// Degenerate cases: all differences zero gives W = 0 and p = 1; zero
/// variance with nonzero mean gives an infinite W reported as p < 1e-12.
pub fn mapsswe(segments: &[ErrorSegment]) -> Result<MapssweResult, SignificanceError> {
    let n = segments.len();
    if n < 2 {
        return Err(SignificanceError::TooFewSegments { found: n });
    }
    let differences: Vec<f64> = segments.iter().map(|s| s.z() as f64).collect();
    let mean = differences.iter().sum::<f64>() / n as f64;
    let var =
        differences.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (n as f64 - 1.0);
    let (w, p) = if var > 0.0 {
        let w = mean / (var / n as f64).sqrt();
        (w, two_sided_p(w))
    } else if mean == 0.0 {
        (0.0, 1.0)
    } else if mean > 0.0 {
        (f64::INFINITY, 1e-12)
    } else {
        (f64::NEG_INFINITY, 1e-12)
    };
    Ok(MapssweResult {
        n_segments: n,
        mean_z: mean,
        var_z: var,
        w_statistic: w,
        p_value: p,
        stars: stars(p),
    })
}

/// Star annotation for a p-value: * below .05, ** below .01, *** below .001.
pub fn stars(p: f64) -> Stars {
    if p < 0.001 {
        Stars::Three
    } else if p < 0.01 {
        Stars::Two
    } else if p < 0.05 {
        Stars::One
    } else {
        Stars::None
    }
}

/// Two-sided normal p-value 2(1 - Phi(|w|)), floored at 1e-12.
fn two_sided_p(w: f64) -> f64 {
    let t = w.abs() / std::f64::consts::SQRT_2;
    // 2(1 - Phi(|w|)) = erfc(|w| / sqrt(2)), computed directly to avoid
    // cancellation for large |w|.
    let p = if t <= 3.0 { 1.0 - erf_series(t) } else { erfc_fraction(t) };
    p.clamp(1e-12, 1.0)
}

/// Standard normal CDF, absolute error below 1e-10 over the real line.
pub fn normal_cdf(x: f64) -> f64 {
    let t = x / std::f64::consts::SQRT_2;
    if t.abs() <= 3.0 {
        0.5 * (1.0 + erf_series(t))
    } else if t > 0.0 {
        1.0 - 0.5 * erfc_fraction(t)
    } else {
        0.5 * erfc_fraction(-t)
    }
}

/// Maclaurin series for erf, accurate to full double precision for |x| <= 3.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        term *= -x2 / n as f64;
        let contribution = term / (2.0 * n as f64 + 1.0);
        sum += contribution;
        if contribution.abs() < 1e-18 {
            break;
        }
    }
    sum * std::f64::consts::FRAC_2_SQRT_PI
}

/// Continued-fraction erfc for x > 3, evaluated bottom-up at fixed depth.
fn erfc_fraction(x: f64) -> f64 {
    let mut inner = 0.0;
    for k in (1..=60).rev() {
        inner = (k as f64 / 2.0) / (x + inner);
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / (x + inner)
}
