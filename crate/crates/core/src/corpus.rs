//! Corpus data model: manifest ingestion, validation, subsetting, union,
//! and duration accounting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::wav;

/// Utterance language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Nl,
    De,
    En,
}

/// Speaker age group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeGroup {
    Child,
    Teen,
    Adult,
}

/// Speech style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Read,
    Hmi,
    Spontaneous,
}

/// How a record's audio came to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Original,
    PitchShift,
    VcMonolingual,
    VcCrosslingual,
}

/// Speaker gender, when known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    M,
    F,
    Unknown,
}

macro_rules! enum_strings {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            /// The manifest spelling of this value.
            pub fn as_str(self) -> &'static str {
                match self {
                    $($ty::$variant => $text,)+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(format!(
                        concat!("unknown ", stringify!($ty), " \"{}\" (expected one of: ",
                                $($text, " ",)+ ")"),
                        other
                    )),
                }
            }
        }
    };
}

enum_strings!(Language { Nl => "nl", De => "de", En => "en" });
enum_strings!(AgeGroup { Child => "child", Teen => "teen", Adult => "adult" });
enum_strings!(Style { Read => "read", Hmi => "hmi", Spontaneous => "spontaneous" });
enum_strings!(Origin {
    Original => "original",
    PitchShift => "pitch_shift",
    VcMonolingual => "vc_monolingual",
    VcCrosslingual => "vc_crosslingual",
});
enum_strings!(Gender { M => "m", F => "f", Unknown => "unknown" });

/// Where a generated record came from and how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Utterance the audio was derived from.
    pub source_utterance_id: String,
    /// Conversion target, for voice-converted records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_speaker_id: Option<String>,
    /// Applied shift, for pitch-shifted records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_cents: Option<f64>,
}

/// One audio file plus its transcript and metadata.
///
/// Field order here defines the canonical manifest key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    /// Audio file location, relative to the manifest's directory.
    pub audio_path: PathBuf,
    /// Pre-tokenized transcript; normalization happens at scoring time.
    pub transcript: Vec<String>,
    /// Duration in seconds; serialized with at least three decimals.
    #[serde(serialize_with = "serialize_duration")]
    pub duration: f64,
    pub language: Language,
    pub age_group: AgeGroup,
    pub style: Style,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Formats a duration with at least three decimal places while staying the
/// shortest representation that round-trips through an f64.
pub fn format_duration(secs: f64) -> String {
    let mut text = format!("{secs}");
    match text.find('.') {
        None => text.push_str(".000"),
        Some(dot) => {
            for _ in (text.len() - dot - 1)..3 {
                text.push('0');
            }
        }
    }
    text
}

fn serialize_duration<S: Serializer>(secs: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    let raw = RawValue::from_string(format_duration(*secs)).map_err(serde::ser::Error::custom)?;
    raw.serialize(serializer)
}

/// A speaker and the utterances attributed to them.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub language: Language,
    pub age_group: AgeGroup,
    pub gender: Gender,
    pub utterance_ids: Vec<String>,
    pub total_duration: f64,
}

/// A named collection of utterance records with per-speaker profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub records: Vec<UtteranceRecord>,
    pub speakers: Vec<SpeakerProfile>,
}

/// Errors raised while loading, constructing, or writing corpora.
#[derive(Debug, Error)]
pub enum CorpusError {
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
    #[error("duplicate utterance_id \"{utterance_id}\" in {context}")]
    Duplicate { utterance_id: String, context: String },
}

/// One broken corpus invariant, reported as data rather than an error.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateUtteranceId { utterance_id: String },
    NonPositiveDuration { utterance_id: String, duration: f64 },
    MissingProvenance { utterance_id: String },
    DanglingProvenance { utterance_id: String, source_utterance_id: String },
    TranscriptMismatch { utterance_id: String, source_utterance_id: String },
    MissingSpeakerProfile { speaker_id: String },
    OrphanProfile { speaker_id: String },
    ProfileDurationMismatch { speaker_id: String, listed: f64, actual: f64 },
    ProfileUtteranceMismatch { speaker_id: String, utterance_id: String },
    MissingAudio { utterance_id: String, path: PathBuf },
    UnreadableAudio { utterance_id: String, detail: String },
    AudioDurationMismatch { utterance_id: String, manifest: f64, header: f64 },
    WrongSampleRate { utterance_id: String, found: u32, expected: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateUtteranceId { utterance_id } => {
                write!(f, "duplicate utterance_id \"{utterance_id}\"")
            }
            Violation::NonPositiveDuration { utterance_id, duration } => {
                write!(f, "utterance \"{utterance_id}\": duration {duration} is not positive")
            }
            Violation::MissingProvenance { utterance_id } => {
                write!(f, "generated utterance \"{utterance_id}\" has no provenance")
            }
            Violation::DanglingProvenance { utterance_id, source_utterance_id } => write!(
                f,
                "utterance \"{utterance_id}\": provenance source \"{source_utterance_id}\" not in corpus"
            ),
            Violation::TranscriptMismatch { utterance_id, source_utterance_id } => write!(
                f,
                "utterance \"{utterance_id}\": transcript differs from source \"{source_utterance_id}\""
            ),
            Violation::MissingSpeakerProfile { speaker_id } => {
                write!(f, "no profile for speaker \"{speaker_id}\"")
            }
            Violation::OrphanProfile { speaker_id } => {
                write!(f, "profile for speaker \"{speaker_id}\" has no records")
            }
            Violation::ProfileDurationMismatch { speaker_id, listed, actual } => write!(
                f,
                "speaker \"{speaker_id}\": profile duration {listed} != summed {actual}"
            ),
            Violation::ProfileUtteranceMismatch { speaker_id, utterance_id } => write!(
                f,
                "speaker \"{speaker_id}\": listed utterance \"{utterance_id}\" missing or owned by another speaker"
            ),
            Violation::MissingAudio { utterance_id, path } => {
                write!(f, "utterance \"{utterance_id}\": audio file {} not found", path.display())
            }
            Violation::UnreadableAudio { utterance_id, detail } => {
                write!(f, "utterance \"{utterance_id}\": {detail}")
            }
            Violation::AudioDurationMismatch { utterance_id, manifest, header } => write!(
                f,
                "utterance \"{utterance_id}\": manifest duration {manifest} vs audio header {header}"
            ),
            Violation::WrongSampleRate { utterance_id, found, expected } => write!(
                f,
                "utterance \"{utterance_id}\": sample rate {found} Hz, expected {expected} Hz"
            ),
        }
    }
}

/// Filter clauses for [`Corpus::subset`]; `None` clauses match everything.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SubsetFilter {
    pub language: Option<Language>,
    pub age_group: Option<AgeGroup>,
    pub style: Option<Style>,
    pub origin: Option<Origin>,
}

impl SubsetFilter {
    /// Whether a record matches every set clause.
    pub fn matches(&self, record: &UtteranceRecord) -> bool {
        self.language.map_or(true, |v| v == record.language)
            && self.age_group.map_or(true, |v| v == record.age_group)
            && self.style.map_or(true, |v| v == record.style)
            && self.origin.map_or(true, |v| v == record.origin)
    }
}

impl FromStr for SubsetFilter {
    type Err = String;

    /// Parses clauses like `age_group=child,language=nl`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut filter = SubsetFilter::default();
        for clause in s.split(',').map(str::trim).filter(|c| !c.is_empty()) {
            let (key, value) = clause
                .split_once('=')
                .ok_or_else(|| format!("filter clause \"{clause}\" is not key=value"))?;
            match key.trim() {
                "language" => filter.language = Some(value.trim().parse()?),
                "age_group" => filter.age_group = Some(value.trim().parse()?),
                "style" => filter.style = Some(value.trim().parse()?),
                "origin" => filter.origin = Some(value.trim().parse()?),
                other => {
                    return Err(format!(
                        "unknown filter key \"{other}\" (expected language, age_group, style, origin)"
                    ))
                }
            }
        }
        Ok(filter)
    }
}

impl Corpus {
    /// Builds a corpus from records, synthesizing one profile per speaker.
    ///
    /// Profile language and age group come from the speaker's first record;
    /// gender is unknown because manifests do not carry it.
    pub fn from_records(
        name: impl Into<String>,
        records: Vec<UtteranceRecord>,
    ) -> Result<Corpus, CorpusError> {
        let name = name.into();
        let mut seen = HashSet::new();
        for record in &records {
            if !seen.insert(record.utterance_id.as_str()) {
                return Err(CorpusError::Duplicate {
                    utterance_id: record.utterance_id.clone(),
                    context: format!("corpus \"{name}\""),
                });
            }
        }
        let speakers = synthesize_profiles(&records);
        Ok(Corpus { name, records, speakers })
    }

    /// Total audio duration in hours.
    pub fn total_hours(&self) -> f64 {
        self.records.iter().map(|r| r.duration).sum::<f64>() / 3600.0
    }

    /// Checks every corpus invariant and returns the violations found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        let mut by_id: HashMap<&str, &UtteranceRecord> = HashMap::new();
        for record in &self.records {
            if by_id.insert(&record.utterance_id, record).is_some() {
                violations.push(Violation::DuplicateUtteranceId {
                    utterance_id: record.utterance_id.clone(),
                });
            }
        }
        let profile_ids: HashSet<&str> =
            self.speakers.iter().map(|p| p.speaker_id.as_str()).collect();

        for record in &self.records {
            if record.duration <= 0.0 || !record.duration.is_finite() {
                violations.push(Violation::NonPositiveDuration {
                    utterance_id: record.utterance_id.clone(),
                    duration: record.duration,
                });
            }
            if !profile_ids.contains(record.speaker_id.as_str()) {
                violations.push(Violation::MissingSpeakerProfile {
                    speaker_id: record.speaker_id.clone(),
                });
            }
            if record.origin != Origin::Original {
                match &record.provenance {
                    None => violations.push(Violation::MissingProvenance {
                        utterance_id: record.utterance_id.clone(),
                    }),
                    Some(prov) => match by_id.get(prov.source_utterance_id.as_str()) {
                        None => violations.push(Violation::DanglingProvenance {
                            utterance_id: record.utterance_id.clone(),
                            source_utterance_id: prov.source_utterance_id.clone(),
                        }),
                        Some(source) if source.transcript != record.transcript => {
                            violations.push(Violation::TranscriptMismatch {
                                utterance_id: record.utterance_id.clone(),
                                source_utterance_id: prov.source_utterance_id.clone(),
                            })
                        }
                        Some(_) => {}
                    },
                }
            }
        }

        let mut speakers_with_records: HashSet<&str> = HashSet::new();
        for record in &self.records {
            speakers_with_records.insert(&record.speaker_id);
        }
        for profile in &self.speakers {
            if !speakers_with_records.contains(profile.speaker_id.as_str()) {
                violations.push(Violation::OrphanProfile {
                    speaker_id: profile.speaker_id.clone(),
                });
            }
            let mut actual = 0.0;
            for utterance_id in &profile.utterance_ids {
                match by_id.get(utterance_id.as_str()) {
                    Some(record) if record.speaker_id == profile.speaker_id => {
                        actual += record.duration
                    }
                    _ => violations.push(Violation::ProfileUtteranceMismatch {
                        speaker_id: profile.speaker_id.clone(),
                        utterance_id: utterance_id.clone(),
                    }),
                }
            }
            if (profile.total_duration - actual).abs() > 1e-6 {
                violations.push(Violation::ProfileDurationMismatch {
                    speaker_id: profile.speaker_id.clone(),
                    listed: profile.total_duration,
                    actual,
                });
            }
        }
        violations
    }

    /// Cross-checks manifest durations and formats against the audio files.
    ///
    /// `base_dir` is the directory audio paths are relative to, and
    /// `expected_rate` the rate every file must carry. Duration mismatches
    /// beyond 0.01 s are violations.
    pub fn validate_audio(&self, base_dir: &Path, expected_rate: u32) -> Vec<Violation> {
        let mut violations = Vec::new();
        for record in &self.records {
            let path = base_dir.join(&record.audio_path);
            if !path.is_file() {
                violations.push(Violation::MissingAudio {
                    utterance_id: record.utterance_id.clone(),
                    path,
                });
                continue;
            }
            match wav::wav_duration_secs(&path) {
                Err(err) => violations.push(Violation::UnreadableAudio {
                    utterance_id: record.utterance_id.clone(),
                    detail: err.to_string(),
                }),
                Ok(header) => {
                    if (header - record.duration).abs() > 0.01 {
                        violations.push(Violation::AudioDurationMismatch {
                            utterance_id: record.utterance_id.clone(),
                            manifest: record.duration,
                            header,
                        });
                    }
                    match wav::read_wav(&path) {
                        Ok(audio) if audio.sample_rate != expected_rate => {
                            violations.push(Violation::WrongSampleRate {
                                utterance_id: record.utterance_id.clone(),
                                found: audio.sample_rate,
                                expected: expected_rate,
                            })
                        }
                        Ok(_) => {}
                        Err(err) => violations.push(Violation::UnreadableAudio {
                            utterance_id: record.utterance_id.clone(),
                            detail: err.to_string(),
                        }),
                    }
                }
            }
        }
        violations
    }

    /// Returns the records matching `filter`, with profiles restricted and
    /// recomputed. Profile gender and metadata are preserved.
    pub fn subset(&self, filter: &SubsetFilter) -> Corpus {
        let records: Vec<UtteranceRecord> =
            self.records.iter().filter(|r| filter.matches(r)).cloned().collect();
        let speakers = restrict_profiles(&self.speakers, &records);
        Corpus { name: self.name.clone(), records, speakers }
    }

    /// Like [`Corpus::subset`] but with an arbitrary record predicate.
    pub fn retain(&self, keep: impl Fn(&UtteranceRecord) -> bool) -> Corpus {
        let records: Vec<UtteranceRecord> =
            self.records.iter().filter(|r| keep(r)).cloned().collect();
        let speakers = restrict_profiles(&self.speakers, &records);
        Corpus { name: self.name.clone(), records, speakers }
    }

    /// Looks up a record by utterance id.
    pub fn record(&self, utterance_id: &str) -> Option<&UtteranceRecord> {
        self.records.iter().find(|r| r.utterance_id == utterance_id)
    }

    /// Looks up a speaker profile by id.
    pub fn speaker(&self, speaker_id: &str) -> Option<&SpeakerProfile> {
        self.speakers.iter().find(|p| p.speaker_id == speaker_id)
    }
}

/// Merges two corpora; utterance ids must be disjoint. Speakers present in
/// both keep the first corpus's metadata with their utterances combined.
pub fn union(a: &Corpus, b: &Corpus) -> Result<Corpus, CorpusError> {
    let ids: HashSet<&str> = a.records.iter().map(|r| r.utterance_id.as_str()).collect();
    for record in &b.records {
        if ids.contains(record.utterance_id.as_str()) {
            return Err(CorpusError::Duplicate {
                utterance_id: record.utterance_id.clone(),
                context: format!("union of \"{}\" and \"{}\"", a.name, b.name),
            });
        }
    }
    let mut records = a.records.clone();
    records.extend(b.records.iter().cloned());

    let mut speakers = a.speakers.clone();
    let mut index: HashMap<String, usize> = speakers
        .iter()
        .enumerate()
        .map(|(i, p)| (p.speaker_id.clone(), i))
        .collect();
    for profile in &b.speakers {
        match index.get(&profile.speaker_id) {
            Some(&i) => {
                speakers[i].utterance_ids.extend(profile.utterance_ids.iter().cloned());
                speakers[i].total_duration += profile.total_duration;
            }
            None => {
                index.insert(profile.speaker_id.clone(), speakers.len());
                speakers.push(profile.clone());
            }
        }
    }
    Ok(Corpus { name: format!("{}+{}", a.name, b.name), records, speakers })
}

fn synthesize_profiles(records: &[UtteranceRecord]) -> Vec<SpeakerProfile> {
    let mut grouped: BTreeMap<&str, Vec<&UtteranceRecord>> = BTreeMap::new();
    for record in records {
        grouped.entry(&record.speaker_id).or_default().push(record);
    }
    grouped
        .into_iter()
        .map(|(speaker_id, utterances)| SpeakerProfile {
            speaker_id: speaker_id.to_owned(),
            language: utterances[0].language,
            age_group: utterances[0].age_group,
            gender: Gender::Unknown,
            utterance_ids: utterances.iter().map(|r| r.utterance_id.clone()).collect(),
            total_duration: utterances.iter().map(|r| r.duration).sum(),
        })
        .collect()
}

fn restrict_profiles(
    profiles: &[SpeakerProfile],
    records: &[UtteranceRecord],
) -> Vec<SpeakerProfile> {
    let mut grouped: HashMap<&str, Vec<&UtteranceRecord>> = HashMap::new();
    for record in records {
        grouped.entry(&record.speaker_id).or_default().push(record);
    }
    let mut restricted = Vec::new();
    for profile in profiles {
        if let Some(utterances) = grouped.get(profile.speaker_id.as_str()) {
            restricted.push(SpeakerProfile {
                speaker_id: profile.speaker_id.clone(),
                language: profile.language,
                age_group: profile.age_group,
                gender: profile.gender,
                utterance_ids: utterances.iter().map(|r| r.utterance_id.clone()).collect(),
                total_duration: utterances.iter().map(|r| r.duration).sum(),
            });
        }
    }
    restricted
}

/// Loads a JSONL manifest; the corpus is named after the file stem.
pub fn load_manifest(path: &Path) -> Result<Corpus, CorpusError> {
    let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let number = idx + 1;
        let record: UtteranceRecord =
            serde_json::from_str(&line).map_err(|source| CorpusError::Parse {
                path: path.to_path_buf(),
                line: number,
                source,
            })?;
        if seen.insert(record.utterance_id.clone(), number).is_some() {
            return Err(CorpusError::Duplicate {
                utterance_id: record.utterance_id,
                context: format!("{}:{}", path.display(), number),
            });
        }
        records.push(record);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_owned());
    let speakers = synthesize_profiles(&records);
    Ok(Corpus { name, records, speakers })
}

/// Renders records in canonical manifest form: one compact JSON object per
/// line, keys in declaration order, durations with at least three decimals.
pub fn manifest_string(records: &[UtteranceRecord]) -> Result<String, serde_json::Error> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes a corpus's records as a canonical JSONL manifest.
pub fn write_manifest(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
    let text = manifest_string(&corpus.records)
        .map_err(|source| CorpusError::Parse { path: path.to_path_buf(), line: 0, source })?;
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(text.as_bytes()).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::record;

    fn fixture() -> Corpus {
        Corpus::from_records(
            "fixture",
            vec![
                record("u1", "spk_a", 1.5, AgeGroup::Child),
                record("u2", "spk_a", 2.25, AgeGroup::Child),
                record("u3", "spk_b", 0.75, AgeGroup::Adult),
                record("u4", "spk_b", 3.0, AgeGroup::Adult),
            ],
        )
        .unwrap()
    }

    #[test]
    fn load_synthesizes_profiles() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.jsonl");
        write_manifest(&fixture(), &path).unwrap();
        let corpus = load_manifest(&path).unwrap();
        assert_eq!(corpus.name, "fixture");
        assert_eq!(corpus.records.len(), 4);
        assert_eq!(corpus.speakers.len(), 2);
        let spk_a = corpus.speaker("spk_a").unwrap();
        assert_eq!(spk_a.utterance_ids, vec!["u1", "u2"]);
        assert!((spk_a.total_duration - 3.75).abs() < 1e-12);
        assert_eq!(spk_a.gender, Gender::Unknown);
        assert!(corpus.validate().is_empty());
    }

    #[test]
    fn duplicate_id_errors_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.jsonl");
        let mut records = fixture().records;
        records[1].utterance_id = "u1".to_owned();
        std::fs::write(&path, manifest_string(&records).unwrap()).unwrap();
        let err = load_manifest(&path).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("u1"), "{text}");
        assert!(text.contains(":2"), "{text}");
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        let corpus = load_manifest(&path).unwrap();
        assert!(corpus.records.is_empty());
        assert!(corpus.speakers.is_empty());
    }

    #[test]
    fn parse_error_carries_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = manifest_string(&fixture().records[..1].to_vec()).unwrap();
        std::fs::write(&path, format!("{good}{{not json\n")).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("canon.jsonl");
        let mut corpus = fixture();
        corpus.records[0].duration = 2.3456789;
        corpus.records[1].origin = Origin::PitchShift;
        corpus.records[1].provenance = Some(Provenance {
            source_utterance_id: "u1".to_owned(),
            target_speaker_id: None,
            shift_cents: Some(310.0),
        });
        write_manifest(&corpus, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let reloaded = load_manifest(&path).unwrap();
        let back = dir.path().join("again.jsonl");
        write_manifest(&reloaded, &back).unwrap();
        assert_eq!(first, std::fs::read(&back).unwrap());
    }

    #[test]
    fn durations_serialize_with_three_decimals() {
        assert_eq!(format_duration(1.5), "1.500");
        assert_eq!(format_duration(7.37), "7.370");
        assert_eq!(format_duration(2.0), "2.000");
        assert_eq!(format_duration(2.3456789), "2.3456789");
        let json = serde_json::to_string(&fixture().records[0]).unwrap();
        assert!(json.contains("\"duration\":1.500,"), "{json}");
        assert!(!json.contains("provenance"), "{json}");
    }

    #[test]
    fn validate_reports_dangling_provenance() {
        let mut corpus = fixture();
        corpus.records[2].origin = Origin::VcMonolingual;
        corpus.records[2].provenance = Some(Provenance {
            source_utterance_id: "missing".to_owned(),
            target_speaker_id: Some("spk_a".to_owned()),
            shift_cents: None,
        });
        let violations = corpus.validate();
        assert_eq!(violations.len(), 1);
        assert!(matches!(&violations[0], Violation::DanglingProvenance { .. }));
    }

    #[test]
    fn validate_reports_transcript_mismatch() {
        let mut corpus = fixture();
        corpus.records[1].origin = Origin::PitchShift;
        corpus.records[1].provenance = Some(Provenance {
            source_utterance_id: "u1".to_owned(),
            target_speaker_id: None,
            shift_cents: Some(250.0),
        });
        corpus.records[1].transcript = vec!["drie".to_owned()];
        let violations = corpus.validate();
        assert_eq!(violations.len(), 1);
        assert!(matches!(&violations[0], Violation::TranscriptMismatch { .. }));
    }

    #[test]
    fn validate_reports_profile_duration_drift() {
        let mut corpus = fixture();
        corpus.speakers[0].total_duration += 10.0;
        let violations = corpus.validate();
        assert_eq!(violations.len(), 1);
        assert!(matches!(&violations[0], Violation::ProfileDurationMismatch { .. }));
    }

    #[test]
    fn subset_filters_and_recomputes_profiles() {
        let corpus = fixture();
        let filter = SubsetFilter { age_group: Some(AgeGroup::Child), ..Default::default() };
        let child = corpus.subset(&filter);
        assert_eq!(child.records.len(), 2);
        assert_eq!(child.speakers.len(), 1);
        assert!((child.speakers[0].total_duration - 3.75).abs() < 1e-12);
        assert_eq!(child.subset(&filter), child);
        let nothing = corpus.subset(&"style=hmi".parse().unwrap());
        assert!(nothing.records.is_empty());
        assert!(nothing.speakers.is_empty());
    }

    #[test]
    fn union_adds_hours_and_rejects_duplicates() {
        let corpus = fixture();
        let child = corpus.subset(&"age_group=child".parse().unwrap());
        let adult = corpus.subset(&"age_group=adult".parse().unwrap());
        let merged = union(&child, &adult).unwrap();
        let sum = child.total_hours() + adult.total_hours();
        assert!((merged.total_hours() - sum).abs() < 1e-9);
        assert!(merged.validate().is_empty());
        assert!(matches!(
            union(&corpus, &child),
            Err(CorpusError::Duplicate { .. })
        ));
    }

    #[test]
    fn total_hours_matches_known_sums() {
        let mut corpus = fixture();
        corpus.records[0].duration = 424.54 * 3600.0;
        corpus.records[1].duration = 5.32 * 3600.0;
        corpus.records[2].duration = 7.37 * 3600.0;
        corpus.records[3].duration = 0.0;
        corpus.records.pop();
        corpus.speakers = synthesize_profiles(&corpus.records);
        assert!((corpus.total_hours() - 437.23).abs() < 1e-9);
        assert!(
            (Corpus::from_records("empty", Vec::new()).unwrap().total_hours()).abs() < f64::EPSILON
        );
    }

    #[test]
    fn filter_parser_rejects_unknown_keys() {
        assert!("color=red".parse::<SubsetFilter>().is_err());
        assert!("language=zz".parse::<SubsetFilter>().is_err());
        let filter: SubsetFilter = "language=nl, origin=pitch_shift".parse().unwrap();
        assert_eq!(filter.language, Some(Language::Nl));
        assert_eq!(filter.origin, Some(Origin::PitchShift));
    }
}
