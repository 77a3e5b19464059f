//! Shared fixtures for unit tests.

use std::path::PathBuf;

use crate::corpus::{AgeGroup, Language, Origin, Style, UtteranceRecord};

/// A minimal original-origin record with transcript "een twee".
pub(crate) fn record(
    utterance_id: &str,
    speaker_id: &str,
    duration: f64,
    age_group: AgeGroup,
) -> UtteranceRecord {
    UtteranceRecord {
        utterance_id: utterance_id.to_owned(),
        speaker_id: speaker_id.to_owned(),
        audio_path: PathBuf::from(format!("audio/{utterance_id}.wav")),
        transcript: vec!["een".to_owned(), "twee".to_owned()],
        duration,
        language: Language::Nl,
        age_group,
        style: Style::Read,
        origin: Origin::Original,
        provenance: None,
    }
}
