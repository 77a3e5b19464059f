//! Source-to-target conversion-pair selection under top/random/last
//! strategies, plus nested k-fold plan expansion.

use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::SimilarityMatrix;
use crate::util::sub_seed;

/// How targets are picked for each source speaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Top,
    Random,
    Last,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Top => "top",
            Strategy::Random => "random",
            Strategy::Last => "last",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "top" => Ok(Strategy::Top),
            "random" => Ok(Strategy::Random),
            "last" => Ok(Strategy::Last),
            other => Err(format!("unknown strategy \"{other}\" (expected top, random, last)")),
        }
    }
}

/// One selected source-to-target conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionPair {
    pub source_speaker: String,
    pub target_speaker: String,
    /// The similarity-matrix entry for this pair.
    pub similarity: f64,
    /// 1-based position within the source's chosen list.
    pub rank: usize,
}

/// The outcome of one pair-selection run.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSelection {
    pub strategy: Strategy,
    pub k: usize,
    /// Present for the random strategy only.
    pub seed: Option<u64>,
    pub pairs: Vec<ConversionPair>,
    pub mean_similarity: f64,
}

/// Errors raised during pair selection and pair-file I/O.
#[derive(Debug, Error)]
pub enum PairingError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("folds must be one of 2, 4, 6, 8, 10; got {0}")]
    InvalidFolds(usize),
    #[error("source \"{source_speaker}\" has {eligible} eligible target(s), fewer than k = {k}")]
    InsufficientTargets {
        source_speaker: String,
        eligible: usize,
        k: usize,
    },
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
    #[error("{path}: {reason}")]
    BadPairFile { path: PathBuf, reason: String },
}

/// Selects `k` targets per source speaker from the similarity matrix.
///
/// `exclude(source, target)` returning true removes a pair from eligibility.
/// Top takes the k highest similarities, last the k lowest, and random draws
/// k targets uniformly without replacement. Ties are broken by ascending
/// target speaker id. Random draws use a per-source sub-seed derived from
/// `seed` and the source speaker id, so adding or removing one source never
/// perturbs another source's draw.
pub fn select_pairs(
    matrix: &SimilarityMatrix,
    strategy: Strategy,
    k: usize,
    seed: u64,
    exclude: impl Fn(&str, &str) -> bool,
) -> Result<PairSelection, PairingError> {
    if k == 0 {
        return Err(PairingError::InvalidK);
    }
    let mut pairs = Vec::new();
    for (row, source_speaker) in matrix.source_ids.iter().enumerate() {
        // Eligible targets in ascending-id order; every strategy builds on
        // this canonical base so results are platform-independent.
        let mut eligible: Vec<(&str, f64)> = matrix
            .target_ids
            .iter()
            .enumerate()
            .filter(|(_, target)| !exclude(source_speaker, target))
            .map(|(col, target)| (target.as_str(), matrix.values[row][col]))
            .collect();
        eligible.sort_by(|a, b| a.0.cmp(b.0));
        if eligible.len() < k {
            return Err(PairingError::InsufficientTargets {
                source_speaker: source_speaker.clone(),
                eligible: eligible.len(),
                k,
            });
        }
        match strategy {
            Strategy::Top => {
                eligible.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            }
            Strategy::Last => {
                eligible.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
            }
            Strategy::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, source_speaker));
                for i in 0..k {
                    let j = rng.gen_range(i..eligible.len());
                    eligible.swap(i, j);
                }
            }
        }
        for (rank, (target_speaker, similarity)) in eligible.into_iter().take(k).enumerate() {
            pairs.push(ConversionPair {
                source_speaker: source_speaker.clone(),
                target_speaker: target_speaker.to_owned(),
                similarity,
                rank: rank + 1,
            });
        }
    }
    let mean_similarity = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().map(|p| p.similarity).sum::<f64>() / pairs.len() as f64
    };
    Ok(PairSelection {
        strategy,
        k,
        seed: (strategy == Strategy::Random).then_some(seed),
        pairs,
        mean_similarity,
    })
}

/// Expands a nested top-strategy fold plan for k = 2, 4, ..., `folds`.
///
/// Each selection's pair set is a superset of the previous one.
pub fn build_fold_plan(
    matrix: &SimilarityMatrix,
    folds: usize,
    exclude: impl Fn(&str, &str) -> bool,
) -> Result<Vec<PairSelection>, PairingError> {
    if folds == 0 || folds > 10 || folds % 2 != 0 {
        return Err(PairingError::InvalidFolds(folds));
    }
    (2..=folds)
        .step_by(2)
        .map(|k| select_pairs(matrix, Strategy::Top, k, 0, &exclude))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct PairFileHeader {
    strategy: Strategy,
    k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct PairLine {
    source: String,
    target: String,
    similarity: f64,
    rank: usize,
}

/// Writes a selection as a JSONL pair file: one header line with
/// strategy/k/seed, then one line per pair.
pub fn write_pairs(path: &Path, selection: &PairSelection) -> Result<(), PairingError> {
    let json_err = |source| PairingError::Parse { path: path.to_path_buf(), line: 0, source };
    let header = PairFileHeader {
        strategy: selection.strategy,
        k: selection.k,
        seed: selection.seed,
    };
    let mut out = serde_json::to_string(&header).map_err(json_err)?;
    out.push('\n');
    for pair in &selection.pairs {
        let line = PairLine {
            source: pair.source_speaker.clone(),
            target: pair.target_speaker.clone(),
            similarity: pair.similarity,
            rank: pair.rank,
        };
        out.push_str(&serde_json::to_string(&line).map_err(json_err)?);
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|source| PairingError::Io { path: path.to_path_buf(), source })
}

/// Reads a pair file written by [`write_pairs`], recomputing the mean.
pub fn read_pairs(path: &Path) -> Result<PairSelection, PairingError> {
    let io_err = |source| PairingError::Io { path: path.to_path_buf(), source };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header: PairFileHeader = match lines.next() {
        None => {
            return Err(PairingError::BadPairFile {
                path: path.to_path_buf(),
                reason: "missing header line".into(),
            })
        }
        Some((_, line)) => {
            let line = line.map_err(io_err)?;
            serde_json::from_str(&line).map_err(|source| PairingError::Parse {
                path: path.to_path_buf(),
                line: 1,
                source,
            })?
        }
    };
    if header.k == 0 {
        return Err(PairingError::BadPairFile {
            path: path.to_path_buf(),
            reason: "header k must be at least 1".into(),
        });
    }
    let mut pairs = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PairLine =
            serde_json::from_str(&line).map_err(|source| PairingError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                source,
            })?;
        if parsed.rank == 0 || parsed.rank > header.k {
            return Err(PairingError::BadPairFile {
                path: path.to_path_buf(),
                reason: format!(
                    "pair {} -> {} has rank {} outside 1..={}",
                    parsed.source, parsed.target, parsed.rank, header.k
                ),
            });
        }
        pairs.push(ConversionPair {
            source_speaker: parsed.source,
            target_speaker: parsed.target,
            similarity: parsed.similarity,
            rank: parsed.rank,
        });
    }
    let mean_similarity = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().map(|p| p.similarity).sum::<f64>() / pairs.len() as f64
    };
    Ok(PairSelection {
        strategy: header.strategy,
        k: header.k,
        seed: header.seed,
        pairs,
        mean_similarity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_exclusions(_: &str, _: &str) -> bool {
        false
    }

    fn matrix_1x3() -> SimilarityMatrix {
        SimilarityMatrix {
            source_ids: vec!["s1".into()],
            target_ids: vec!["t1".into(), "t2".into(), "t3".into()],
            values: vec![vec![0.9, 0.5, 0.1]],
        }
    }

    fn targets_of(selection: &PairSelection) -> Vec<&str> {
        selection.pairs.iter().map(|p| p.target_speaker.as_str()).collect()
    }

    #[test]
    fn top_takes_highest_similarities() {
        let selection = select_pairs(&matrix_1x3(), Strategy::Top, 2, 0, no_exclusions).unwrap();
        assert_eq!(targets_of(&selection), vec!["t1", "t2"]);
        assert_eq!(selection.pairs[0].rank, 1);
        assert_eq!(selection.pairs[1].rank, 2);
        assert!((selection.mean_similarity - 0.7).abs() < 1e-12);
        assert_eq!(selection.seed, None);
    }

    #[test]
    fn last_takes_lowest_similarities() {
        let selection = select_pairs(&matrix_1x3(), Strategy::Last, 2, 0, no_exclusions).unwrap();
        assert_eq!(targets_of(&selection), vec!["t3", "t2"]);
        assert!((selection.mean_similarity - 0.3).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_k_selects_the_same_set_under_every_strategy() {
        let matrix = matrix_1x3();
        let mut sets: Vec<Vec<String>> = [Strategy::Top, Strategy::Random, Strategy::Last]
            .into_iter()
            .map(|strategy| {
                let selection = select_pairs(&matrix, strategy, 3, 7, no_exclusions).unwrap();
                let mut targets: Vec<String> =
                    selection.pairs.iter().map(|p| p.target_speaker.clone()).collect();
                targets.sort_unstable();
                targets
            })
            .collect();
        sets.dedup();
        assert_eq!(sets.len(), 1);
    }

    #[test]
    fn random_is_reproducible_and_source_local() {
        let matrix = SimilarityMatrix {
            source_ids: vec!["s1".into(), "s2".into()],
            target_ids: (1..=6).map(|i| format!("t{i}")).collect(),
            values: vec![
                vec![0.9, 0.7, 0.5, 0.3, 0.2, 0.0],
                vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            ],
        };
        let a = select_pairs(&matrix, Strategy::Random, 2, 42, no_exclusions).unwrap();
        let b = select_pairs(&matrix, Strategy::Random, 2, 42, no_exclusions).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed, Some(42));

        let solo = SimilarityMatrix {
            source_ids: vec!["s1".into()],
            target_ids: matrix.target_ids.clone(),
            values: vec![matrix.values[0].clone()],
        };
        let alone = select_pairs(&solo, Strategy::Random, 2, 42, no_exclusions).unwrap();
        let s1_pairs: Vec<_> =
            a.pairs.iter().filter(|p| p.source_speaker == "s1").cloned().collect();
        assert_eq!(alone.pairs, s1_pairs);
    }

    #[test]
    fn equal_similarities_break_ties_by_target_id() {
        let matrix = SimilarityMatrix {
            source_ids: vec!["s1".into()],
            target_ids: vec!["t3".into(), "t1".into(), "t2".into()],
            values: vec![vec![0.5, 0.5, 0.5]],
        };
        let top = select_pairs(&matrix, Strategy::Top, 3, 0, no_exclusions).unwrap();
        assert_eq!(targets_of(&top), vec!["t1", "t2", "t3"]);
        let last = select_pairs(&matrix, Strategy::Last, 3, 0, no_exclusions).unwrap();
        assert_eq!(targets_of(&last), vec!["t1", "t2", "t3"]);
    }

    #[test]
    fn exclusions_are_respected_and_can_exhaust_targets() {
        let matrix = SimilarityMatrix {
            source_ids: vec!["a".into()],
            target_ids: vec!["a".into(), "b".into(), "c".into()],
            values: vec![vec![1.0, 0.4, 0.2]],
        };
        let self_pair = |s: &str, t: &str| s == t;
        let selection = select_pairs(&matrix, Strategy::Top, 2, 0, self_pair).unwrap();
        assert!(selection.pairs.iter().all(|p| p.source_speaker != p.target_speaker));
        assert_eq!(targets_of(&selection), vec!["b", "c"]);
        let err = select_pairs(&matrix, Strategy::Top, 3, 0, self_pair).unwrap_err();
        assert!(matches!(
            err,
            PairingError::InsufficientTargets { eligible: 2, k: 3, .. }
        ));
        assert!(matches!(
            select_pairs(&matrix, Strategy::Top, 0, 0, no_exclusions),
            Err(PairingError::InvalidK)
        ));
    }

    #[test]
    fn fold_plans_nest() {
        let matrix = SimilarityMatrix {
            source_ids: vec!["s1".into()],
            target_ids: (1..=10).map(|i| format!("t{i:02}")).collect(),
            values: vec![(1..=10).map(|i| i as f64 / 10.0).collect()],
        };
        let plan = build_fold_plan(&matrix, 10, no_exclusions).unwrap();
        assert_eq!(plan.len(), 5);
        for window in plan.windows(2) {
            let smaller: Vec<_> = targets_of(&window[0]);
            let larger: Vec<_> = targets_of(&window[1]);
            assert!(smaller.iter().all(|t| larger.contains(t)));
        }
        let mut all = targets_of(&plan[4]);
        all.sort_unstable();
        assert_eq!(all.len(), 10);
        assert!(matches!(
            build_fold_plan(&matrix, 3, no_exclusions),
            Err(PairingError::InvalidFolds(3))
        ));
        assert!(matches!(
            build_fold_plan(&matrix, 12, no_exclusions),
            Err(PairingError::InvalidFolds(12))
        ));
    }

    #[test]
    fn random_means_sit_between_last_and_top() {
        let matrix = SimilarityMatrix {
            source_ids: vec!["s1".into()],
            target_ids: (1..=6).map(|i| format!("t{i}")).collect(),
            values: vec![vec![0.9, 0.7, 0.5, 0.3, 0.2, 0.0]],
        };
        let top = select_pairs(&matrix, Strategy::Top, 2, 0, no_exclusions).unwrap();
        let last = select_pairs(&matrix, Strategy::Last, 2, 0, no_exclusions).unwrap();
        assert!(top.mean_similarity >= last.mean_similarity);
        let mut total = 0.0;
        let seeds: u64 = 200;
        for seed in 0..seeds {
            let random = select_pairs(&matrix, Strategy::Random, 2, seed, no_exclusions).unwrap();
            total += random.mean_similarity;
        }
        let empirical = total / seeds as f64;
        assert!(
            empirical >= last.mean_similarity && empirical <= top.mean_similarity,
            "empirical mean {empirical} outside [{}, {}]",
            last.mean_similarity,
            top.mean_similarity
        );
    }

    #[test]
    fn pair_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let matrix = matrix_1x3();
        let selection = select_pairs(&matrix, Strategy::Random, 2, 9, no_exclusions).unwrap();
        write_pairs(&path, &selection).unwrap();
        let back = read_pairs(&path).unwrap();
        assert_eq!(back, selection);
        let text = std::fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.contains("\"strategy\":\"random\""), "{header}");
        assert!(header.contains("\"seed\":9"), "{header}");
    }

    #[test]
    fn pair_file_rejects_bad_ranks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"strategy\":\"top\",\"k\":1}\n{\"source\":\"a\",\"target\":\"b\",\"similarity\":0.5,\"rank\":2}\n",
        )
        .unwrap();
        assert!(matches!(read_pairs(&path), Err(PairingError::BadPairFile { .. })));
        std::fs::write(&path, "").unwrap();
        assert!(matches!(read_pairs(&path), Err(PairingError::BadPairFile { .. })));
    }
}
