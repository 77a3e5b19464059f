//! Augmentation planning and execution: pitch-shift plans over selected
//! speakers, voice-conversion plans over pair selections, and an executor
//! that writes output audio plus an augmented manifest with hours accounting.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AgeGroup, Corpus, CorpusError, Origin, Provenance, UtteranceRecord};
use crate::dsp::{self, AudioBuffer, DspError, WsolaParams};
use crate::embeddings::{F0_FRAME_SECS, HOP_SECS};
use crate::exec;
use crate::pairing::PairSelection;
use crate::util::{relative_path, sub_seed};
use crate::wav::{self, WavError};

/// One planned pitch-shift rendering.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PitchJob {
    pub source_utterance_id: String,
    pub cents: i32,
    pub output_utterance_id: String,
    pub output_path: PathBuf,
}

/// Whether a conversion crosses languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VcMode {
    Monolingual,
    Crosslingual,
}

impl VcMode {
    pub fn as_str(self) -> &'static str {
        match self {
            VcMode::Monolingual => "monolingual",
            VcMode::Crosslingual => "crosslingual",
        }
    }

    fn origin(self) -> Origin {
        match self {
            VcMode::Monolingual => Origin::VcMonolingual,
            VcMode::Crosslingual => Origin::VcCrosslingual,
        }
    }
}

impl fmt::Display for VcMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VcMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "monolingual" => Ok(VcMode::Monolingual),
            "crosslingual" => Ok(VcMode::Crosslingual),
            other => {
                Err(format!("unknown VC mode \"{other}\" (expected monolingual, crosslingual)"))
            }
        }
    }
}

/// One planned voice conversion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VcJob {
    pub source_utterance_id: String,
    pub target_speaker_id: String,
    pub mode: VcMode,
    pub output_utterance_id: String,
    pub output_path: PathBuf,
}

/// Either kind of planned rendering.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Job {
    Pitch(PitchJob),
    Vc(VcJob),
}

impl Job {
    pub fn source_utterance_id(&self) -> &str {
        match self {
            Job::Pitch(job) => &job.source_utterance_id,
            Job::Vc(job) => &job.source_utterance_id,
        }
    }

    pub fn output_utterance_id(&self) -> &str {
        match self {
            Job::Pitch(job) => &job.output_utterance_id,
            Job::Vc(job) => &job.output_utterance_id,
        }
    }

    pub fn output_path(&self) -> &Path {
        match self {
            Job::Pitch(job) => &job.output_path,
            Job::Vc(job) => &job.output_path,
        }
    }
}

/// A record set aside during planning, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Excluded {
    pub utterance_id: String,
    pub reason: String,
}

/// An executable set of augmentation jobs with hour accounting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentationPlan {
    pub jobs: Vec<Job>,
    /// Sum of source durations over all jobs, in hours.
    pub expected_added_hours: f64,
    pub excluded: Vec<Excluded>,
    pub seed: u64,
}

/// How VC jobs are rendered. Pitch jobs always use the built-in DSP chain.
#[derive(Debug, Clone, PartialEq)]
pub enum ConversionBackend {
    /// Deterministic pitch-mapping double: shifts each source toward the
    /// target speaker's median F0.
    Standin,
    /// External converter driven by the batch protocol (see [`execute_plan`]).
    Command { command: String },
}

/// One job that did not produce usable output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobFailure {
    pub output_utterance_id: String,
    pub reason: String,
}

/// What [`execute_plan`] produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionOutcome {
    /// Original records (audio paths rewritten relative to the output
    /// directory) plus one record per successful job.
    pub corpus: Corpus,
    pub failures: Vec<JobFailure>,
    /// Sum of generated durations, in hours.
    pub realized_added_hours: f64,
}

/// Errors raised during augmentation planning and execution.
#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("no speakers match the age filter")]
    EmptySpeakerSet,
    #[error("cents range [{low}, {high}] is invalid (need low < high within +-1200)")]
    InvalidCentsRange { low: i32, high: i32 },
    #[error("per_speaker = {per_speaker} but the cents range holds {available} distinct value(s)")]
    InvalidPerSpeaker { per_speaker: usize, available: usize },
    #[error("{role} speaker \"{speaker_id}\" is not in the corpus")]
    UnknownSpeaker { speaker_id: String, role: &'static str },
    #[error(
        "pair {source_speaker} -> {target_speaker} has languages {source_language}/{target_language}, \
         inconsistent with mode {mode}"
    )]
    LanguageModeMismatch {
        source_speaker: String,
        target_speaker: String,
        source_language: String,
        target_language: String,
        mode: VcMode,
    },
    #[error("utterance \"{utterance_id}\" referenced by the plan is not in the corpus")]
    UnknownUtterance { utterance_id: String },
    #[error("source F0 {f0} Hz is not voiced")]
    UnvoicedSource { f0: f64 },
    #[error("speaker \"{speaker_id}\" has no voiced frames to estimate F0 from")]
    UnvoicedSpeaker { speaker_id: String },
    #[error("failed to launch VC command \"{command}\": {source}")]
    BackendLaunch {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("VC command \"{command}\" exited with {status} and left no status file: {stderr}")]
    BackendFailed {
        command: String,
        status: String,
        stderr: String,
    },
    #[error("backend reported success but \"{path}\" is missing")]
    MissingOutput { path: PathBuf },
    #[error("{path}:{line}: bad status line: {source}")]
    BadStatusLine {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn gen_path(output_utterance_id: &str) -> PathBuf {
    PathBuf::from(format!("gen/{output_utterance_id}.wav"))
}

/// Plans `per_speaker` pitch-shifted copies of every original utterance of
/// every speaker in the given age groups.
///
/// Each speaker gets `per_speaker` distinct integer cents values drawn
/// uniformly from `cents_range` (inclusive) under a per-speaker sub-seed, so
/// adding or removing one speaker never changes another's draws. Records
/// that are not original recordings are excluded rather than re-augmented.
pub fn plan_pitch_augmentation(
    corpus: &Corpus,
    ages: &[AgeGroup],
    cents_range: (i32, i32),
    per_speaker: usize,
    seed: u64,
) -> Result<AugmentationPlan, AugmentError> {
    let (low, high) = cents_range;
    if low >= high || low.abs() > 1200 || high.abs() > 1200 {
        return Err(AugmentError::InvalidCentsRange { low, high });
    }
    let available = (high - low + 1) as usize;
    if per_speaker == 0 || per_speaker > available {
        return Err(AugmentError::InvalidPerSpeaker { per_speaker, available });
    }
    let speakers: Vec<&str> = corpus
        .speakers
        .iter()
        .filter(|p| ages.contains(&p.age_group))
        .map(|p| p.speaker_id.as_str())
        .collect();
    if speakers.is_empty() {
        return Err(AugmentError::EmptySpeakerSet);
    }

    let mut jobs = Vec::new();
    let mut excluded = Vec::new();
    let mut expected_secs = 0.0;
    for speaker_id in speakers {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, speaker_id));
        let mut values: Vec<i32> = (low..=high).collect();
        for i in 0..per_speaker {
            let j = rng.gen_range(i..values.len());
            values.swap(i, j);
        }
        let mut draws = values[..per_speaker].to_vec();
        draws.sort_unstable();

        let records: Vec<&UtteranceRecord> =
            corpus.records.iter().filter(|r| r.speaker_id == speaker_id).collect();
        for &cents in &draws {
            for record in &records {
                if record.origin != Origin::Original {
                    continue;
                }
                let output_utterance_id = format!("{}__ps{}", record.utterance_id, cents);
                jobs.push(Job::Pitch(PitchJob {
                    source_utterance_id: record.utterance_id.clone(),
                    cents,
                    output_path: gen_path(&output_utterance_id),
                    output_utterance_id,
                }));
                expected_secs += record.duration;
            }
        }
        for record in &records {
            if record.origin != Origin::Original {
                excluded.push(Excluded {
                    utterance_id: record.utterance_id.clone(),
                    reason: format!("origin {} is not an original recording", record.origin),
                });
            }
        }
    }
    Ok(AugmentationPlan {
        jobs,
        expected_added_hours: expected_secs / 3600.0,
        excluded,
        seed,
    })
}

/// Plans one conversion per (source utterance, selected target) pair, a
/// k-fold expansion of the selection's source speakers.
pub fn plan_vc_augmentation(
    corpus: &Corpus,
    selection: &PairSelection,
    mode: VcMode,
) -> Result<AugmentationPlan, AugmentError> {
    for pair in &selection.pairs {
        let source =
            corpus.speaker(&pair.source_speaker).ok_or_else(|| AugmentError::UnknownSpeaker {
                speaker_id: pair.source_speaker.clone(),
                role: "source",
            })?;
        let target =
            corpus.speaker(&pair.target_speaker).ok_or_else(|| AugmentError::UnknownSpeaker {
                speaker_id: pair.target_speaker.clone(),
                role: "target",
            })?;
        let languages_match = source.language == target.language;
        if languages_match != (mode == VcMode::Monolingual) {
            return Err(AugmentError::LanguageModeMismatch {
                source_speaker: pair.source_speaker.clone(),
                target_speaker: pair.target_speaker.clone(),
                source_language: source.language.to_string(),
                target_language: target.language.to_string(),
                mode,
            });
        }
    }

    let mut jobs = Vec::new();
    let mut excluded = Vec::new();
    let mut expected_secs = 0.0;
    for pair in &selection.pairs {
        for record in &corpus.records {
            if record.speaker_id != pair.source_speaker || record.origin != Origin::Original {
                continue;
            }
            let output_utterance_id =
                format!("{}__vc_{}", record.utterance_id, pair.target_speaker);
            jobs.push(Job::Vc(VcJob {
                source_utterance_id: record.utterance_id.clone(),
                target_speaker_id: pair.target_speaker.clone(),
                mode,
                output_path: gen_path(&output_utterance_id),
                output_utterance_id,
            }));
            expected_secs += record.duration;
        }
    }
    let mut seen: HashSet<&str> = HashSet::new();
    for pair in &selection.pairs {
        if !seen.insert(&pair.source_speaker) {
            continue;
        }
        for record in &corpus.records {
            if record.speaker_id == pair.source_speaker && record.origin != Origin::Original {
                excluded.push(Excluded {
                    utterance_id: record.utterance_id.clone(),
                    reason: format!("origin {} is not an original recording", record.origin),
                });
            }
        }
    }
    Ok(AugmentationPlan {
        jobs,
        expected_added_hours: expected_secs / 3600.0,
        excluded,
        seed: selection.seed.unwrap_or(0),
    })
}

/// Converts `source` toward a target voice by shifting its pitch to map the
/// source median F0 onto the target's, clamped to one octave either way.
pub fn standin_convert(
    source: &AudioBuffer,
    source_f0: f64,
    target_median_f0: f64,
) -> Result<AudioBuffer, AugmentError> {
    if source_f0 <= 0.0 {
        return Err(AugmentError::UnvoicedSource { f0: source_f0 });
    }
    if target_median_f0 <= 0.0 {
        return Err(AugmentError::UnvoicedSource { f0: target_median_f0 });
    }
    let cents = (1200.0 * (target_median_f0 / source_f0).log2()).clamp(-1200.0, 1200.0);
    Ok(dsp::pitch_shift(source, cents, WsolaParams::default())?)
}

#[derive(Debug, Serialize)]
struct BatchJob {
    source_wav: String,
    target_speaker: String,
    target_ref_wavs: Vec<String>,
    output_wav: String,
}

#[derive(Debug, Deserialize)]
struct StatusLine {
    output_wav: String,
    ok: bool,
    #[serde(default)]
    message: String,
}

/// Executes a plan against `corpus`, writing output WAVs under
/// `out_dir/gen/` and returning the augmented corpus.
///
/// Pitch jobs run through the built-in DSP chain; VC jobs run through
/// `backend`. A `Command` backend receives one argument, the path of a JSONL
/// batch file whose lines hold `source_wav`, `target_speaker`,
/// `target_ref_wavs`, and `output_wav`. Exit code 0 means every output was
/// written; on a nonzero exit the backend must leave a status file at
/// `<batch path>.status` (JSONL of `output_wav`/`ok`/`message`) naming the
/// jobs that failed. Failed jobs are reported in the outcome, never silently
/// dropped, and successful jobs are kept.
///
/// Generated records copy the source transcript and style, keep the source
/// language, and take the target speaker's age group (pitch jobs keep the
/// source's). Original records are re-emitted with audio paths rewritten
/// relative to `out_dir` so the augmented manifest resolves from there.
pub fn execute_plan(
    plan: &AugmentationPlan,
    backend: &ConversionBackend,
    corpus: &Corpus,
    audio_base: &Path,
    out_dir: &Path,
) -> Result<ExecutionOutcome, AugmentError> {
    for job in &plan.jobs {
        let id = job.source_utterance_id();
        if corpus.record(id).is_none() {
            return Err(AugmentError::UnknownUtterance { utterance_id: id.to_owned() });
        }
    }
    let audio_base = absolutize(audio_base)?;
    let out_dir = absolutize(out_dir)?;
    let gen_dir = out_dir.join("gen");
    std::fs::create_dir_all(&gen_dir)
        .map_err(|source| AugmentError::Io { path: gen_dir.clone(), source })?;

    let mut pitch_jobs = Vec::new();
    let mut vc_jobs = Vec::new();
    for (index, job) in plan.jobs.iter().enumerate() {
        match job {
            Job::Pitch(job) => pitch_jobs.push((index, job)),
            Job::Vc(job) => vc_jobs.push((index, job)),
        }
    }

    let mut completed: Vec<(usize, UtteranceRecord)> = Vec::new();
    let mut failures: Vec<(usize, JobFailure)> = Vec::new();
    let split = |results: Vec<(usize, Result<UtteranceRecord, JobFailure>)>,
                 completed: &mut Vec<(usize, UtteranceRecord)>,
                 failures: &mut Vec<(usize, JobFailure)>| {
        for (index, result) in results {
            match result {
                Ok(record) => completed.push((index, record)),
                Err(failure) => failures.push((index, failure)),
            }
        }
    };

    let pitch_results = exec::map(&pitch_jobs, |&(index, job)| {
        (index, run_pitch_job(job, corpus, &audio_base, &out_dir))
    });
    split(pitch_results, &mut completed, &mut failures);

    match backend {
        ConversionBackend::Standin => {
            let mut targets: Vec<&str> =
                vc_jobs.iter().map(|(_, job)| job.target_speaker_id.as_str()).collect();
            targets.sort_unstable();
            targets.dedup();
            let f0_results = exec::map(&targets, |&target| {
                (target, speaker_median_f0(corpus, target, &audio_base))
            });
            let target_f0: HashMap<&str, Result<f64, String>> = f0_results
                .into_iter()
                .map(|(t, r)| (t, r.map_err(|e| e.to_string())))
                .collect();
            let vc_results = exec::map(&vc_jobs, |&(index, job)| {
                let result = match &target_f0[job.target_speaker_id.as_str()] {
                    Ok(f0) => run_standin_job(job, *f0, corpus, &audio_base, &out_dir),
                    Err(reason) => Err(JobFailure {
                        output_utterance_id: job.output_utterance_id.clone(),
                        reason: reason.clone(),
                    }),
                };
                (index, result)
            });
            split(vc_results, &mut completed, &mut failures);
        }
        ConversionBackend::Command { command } => {
            let vc_results = run_command_batch(&vc_jobs, command, corpus, &audio_base, &out_dir)?;
            split(vc_results, &mut completed, &mut failures);
        }
    }

    completed.sort_by_key(|&(index, _)| index);
    failures.sort_by_key(|&(index, _)| index);
    let realized_added_hours =
        completed.iter().map(|(_, r)| r.duration).sum::<f64>() / 3600.0;

    let mut records: Vec<UtteranceRecord> = corpus
        .records
        .iter()
        .map(|record| {
            let mut record = record.clone();
            record.audio_path = relative_path(&out_dir, &audio_base.join(&record.audio_path));
            record
        })
        .collect();
    records.extend(completed.into_iter().map(|(_, r)| r));

    let mut augmented = Corpus::from_records(&format!("{}+aug", corpus.name), records)?;
    for profile in &mut augmented.speakers {
        if let Some(original) = corpus.speaker(&profile.speaker_id) {
            profile.language = original.language;
            profile.age_group = original.age_group;
            profile.gender = original.gender;
        }
    }
    Ok(ExecutionOutcome {
        corpus: augmented,
        failures: failures.into_iter().map(|(_, f)| f).collect(),
        realized_added_hours,
    })
}

fn absolutize(path: &Path) -> Result<PathBuf, AugmentError> {
    std::path::absolute(path)
        .map_err(|source| AugmentError::Io { path: path.to_path_buf(), source })
}

fn fail(job_id: &str, reason: impl fmt::Display) -> JobFailure {
    JobFailure {
        output_utterance_id: job_id.to_owned(),
        reason: reason.to_string(),
    }
}

fn generated_record(
    source: &UtteranceRecord,
    output_utterance_id: &str,
    output_path: &Path,
    speaker_id: String,
    age_group: AgeGroup,
    origin: Origin,
    provenance: Provenance,
    duration: f64,
) -> UtteranceRecord {
    UtteranceRecord {
        utterance_id: output_utterance_id.to_owned(),
        speaker_id,
        audio_path: output_path.to_path_buf(),
        transcript: source.transcript.clone(),
        duration,
        language: source.language,
        age_group,
        style: source.style,
        origin,
        provenance: Some(provenance),
    }
}

fn run_pitch_job(
    job: &PitchJob,
    corpus: &Corpus,
    audio_base: &Path,
    out_dir: &Path,
) -> Result<UtteranceRecord, JobFailure> {
    let source = corpus.record(&job.source_utterance_id).expect("sources checked upfront");
    let job_fail = |reason: &dyn fmt::Display| fail(&job.output_utterance_id, reason);
    let audio = wav::read_wav(&audio_base.join(&source.audio_path)).map_err(|e| job_fail(&e))?;
    let shifted =
        dsp::pitch_shift(&audio, f64::from(job.cents), WsolaParams::default())
            .map_err(|e| job_fail(&e))?;
    wav::write_wav(&out_dir.join(&job.output_path), &shifted).map_err(|e| job_fail(&e))?;
    Ok(generated_record(
        source,
        &job.output_utterance_id,
        &job.output_path,
        format!("{}__ps{}", source.speaker_id, job.cents),
        source.age_group,
        Origin::PitchShift,
        Provenance {
            source_utterance_id: source.utterance_id.clone(),
            target_speaker_id: None,
            shift_cents: Some(f64::from(job.cents)),
        },
        shifted.duration_secs(),
    ))
}

/// Median F0 over all voiced frames of every utterance of a speaker.
fn speaker_median_f0(
    corpus: &Corpus,
    speaker_id: &str,
    audio_base: &Path,
) -> Result<f64, AugmentError> {
    let mut voiced: Vec<f64> = Vec::new();
    for record in &corpus.records {
        if record.speaker_id != speaker_id {
            continue;
        }
        let audio = wav::read_wav(&audio_base.join(&record.audio_path))?;
        let track = dsp::estimate_f0(&audio, F0_FRAME_SECS, HOP_SECS)?;
        voiced.extend(track.values.iter().flatten());
    }
    if voiced.is_empty() {
        return Err(AugmentError::UnvoicedSpeaker { speaker_id: speaker_id.to_owned() });
    }
    voiced.sort_by(f64::total_cmp);
    let n = voiced.len();
    if n % 2 == 1 {
        Ok(voiced[n / 2])
    } else {
        Ok((voiced[n / 2 - 1] + voiced[n / 2]) / 2.0)
    }
}

fn run_standin_job(
    job: &VcJob,
    target_f0: f64,
    corpus: &Corpus,
    audio_base: &Path,
    out_dir: &Path,
) -> Result<UtteranceRecord, JobFailure> {
    let source = corpus.record(&job.source_utterance_id).expect("sources checked upfront");
    let target = corpus.speaker(&job.target_speaker_id).expect("targets checked at planning");
    let job_fail = |reason: &dyn fmt::Display| fail(&job.output_utterance_id, reason);

    let audio = wav::read_wav(&audio_base.join(&source.audio_path)).map_err(|e| job_fail(&e))?;
    let track =
        dsp::estimate_f0(&audio, F0_FRAME_SECS, HOP_SECS).map_err(|e| job_fail(&e))?;
    let source_f0 = track.median_f0.unwrap_or(0.0);
    let converted = standin_convert(&audio, source_f0, target_f0).map_err(|e| job_fail(&e))?;
    wav::write_wav(&out_dir.join(&job.output_path), &converted).map_err(|e| job_fail(&e))?;
    Ok(generated_record(
        source,
        &job.output_utterance_id,
        &job.output_path,
        format!("{}__x__{}", source.speaker_id, job.target_speaker_id),
        target.age_group,
        job.mode.origin(),
        Provenance {
            source_utterance_id: source.utterance_id.clone(),
            target_speaker_id: Some(job.target_speaker_id.clone()),
            shift_cents: None,
        },
        converted.duration_secs(),
    ))
}

fn run_command_batch(
    jobs: &[(usize, &VcJob)],
    command: &str,
    corpus: &Corpus,
    audio_base: &Path,
    out_dir: &Path,
) -> Result<Vec<(usize, Result<UtteranceRecord, JobFailure>)>, AugmentError> {
    if jobs.is_empty() {
        return Ok(Vec::new());
    }
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| AugmentError::Io { path, source }
    };

    let batch_path = out_dir.join("vc_batch.jsonl");
    let mut batch = String::new();
    for (_, job) in jobs {
        let source = corpus.record(&job.source_utterance_id).expect("sources checked upfront");
        let target_ref_wavs: Vec<String> = corpus
            .records
            .iter()
            .filter(|r| r.speaker_id == job.target_speaker_id)
            .map(|r| audio_base.join(&r.audio_path).display().to_string())
            .collect();
        let line = BatchJob {
            source_wav: audio_base.join(&source.audio_path).display().to_string(),
            target_speaker: job.target_speaker_id.clone(),
            target_ref_wavs,
            output_wav: out_dir.join(&job.output_path).display().to_string(),
        };
        batch.push_str(&serde_json::to_string(&line).expect("batch serialization cannot fail"));
        batch.push('\n');
    }
    std::fs::write(&batch_path, batch).map_err(io_err(&batch_path))?;

    let mut parts = command.split_whitespace();
    let program = parts.next().ok_or_else(|| AugmentError::BackendLaunch {
        command: command.to_owned(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty command"),
    })?;
    let output = Command::new(program)
        .args(parts)
        .arg(&batch_path)
        .output()
        .map_err(|source| AugmentError::BackendLaunch { command: command.to_owned(), source })?;

    let mut failed: HashMap<String, String> = HashMap::new();
    if !output.status.success() {
        let status_path = PathBuf::from(format!("{}.status", batch_path.display()));
        let text = std::fs::read_to_string(&status_path).map_err(|_| {
            AugmentError::BackendFailed {
                command: command.to_owned(),
                status: output.status.to_string(),
                stderr: String::from_utf8_lossy(&output.stderr).trim().to_owned(),
            }
        })?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let status: StatusLine =
                serde_json::from_str(line).map_err(|source| AugmentError::BadStatusLine {
                    path: status_path.clone(),
                    line: i + 1,
                    source,
                })?;
            if !status.ok {
                failed.insert(status.output_wav, status.message);
            }
        }
    }

    let mut results = Vec::new();
    for &(index, job) in jobs {
        let source = corpus.record(&job.source_utterance_id).expect("sources checked upfront");
        let target = corpus.speaker(&job.target_speaker_id).expect("targets checked at planning");
        let output_wav = out_dir.join(&job.output_path);
        if let Some(message) = failed.get(&output_wav.display().to_string()) {
            results.push((index, Err(fail(&job.output_utterance_id, message))));
            continue;
        }
        if !output_wav.exists() {
            return Err(AugmentError::MissingOutput { path: output_wav });
        }
        let duration = wav::wav_duration_secs(&output_wav)?;
        results.push((
            index,
            Ok(generated_record(
                source,
                &job.output_utterance_id,
                &job.output_path,
                format!("{}__x__{}", source.speaker_id, job.target_speaker_id),
                target.age_group,
                job.mode.origin(),
                Provenance {
                    source_utterance_id: source.utterance_id.clone(),
                    target_speaker_id: Some(job.target_speaker_id.clone()),
                    shift_cents: None,
                },
                duration,
            )),
        ));
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Language, Style};
    use crate::pairing::{ConversionPair, Strategy};
    use crate::testutil::record;
    use std::f32::consts::TAU;

    fn pair(source: &str, target: &str, similarity: f64, rank: usize) -> ConversionPair {
        ConversionPair {
            source_speaker: source.to_owned(),
            target_speaker: target.to_owned(),
            similarity,
            rank,
        }
    }

    fn selection(pairs: Vec<ConversionPair>) -> PairSelection {
        let mean_similarity =
            pairs.iter().map(|p| p.similarity).sum::<f64>() / pairs.len() as f64;
        PairSelection {
            strategy: Strategy::Top,
            k: pairs.iter().map(|p| p.rank).max().unwrap_or(1),
            seed: None,
            pairs,
            mean_similarity,
        }
    }

    fn tone(freq: f32, secs: f64, sample_rate: u32) -> AudioBuffer {
        let n = (secs * sample_rate as f64).round() as usize;
        let samples: Vec<f32> = (0..n)
            .map(|i| 0.4 * (TAU * freq * i as f32 / sample_rate as f32).sin())
            .collect();
        AudioBuffer::new(samples, sample_rate).unwrap()
    }

    /// Writes a tone per record into `base/audio/` and fixes up durations.
    fn write_fixture_audio(records: &mut [UtteranceRecord], base: &Path, freq: f32) {
        std::fs::create_dir_all(base.join("audio")).unwrap();
        for record in records {
            let audio = tone(freq, record.duration, 16_000);
            wav::write_wav(&base.join(&record.audio_path), &audio).unwrap();
            record.duration = audio.duration_secs();
        }
    }

    #[test]
    fn pitch_plan_reproduces_child_hours() {
        let records = vec![
            record("u1", "spk_a", 6000.0, AgeGroup::Child),
            record("u2", "spk_a", 7000.0, AgeGroup::Child),
            record("u3", "spk_b", 13532.0, AgeGroup::Child),
            record("u4", "spk_c", 1000.0, AgeGroup::Adult),
        ];
        let corpus = Corpus::from_records("child", records).unwrap();
        let plan =
            plan_pitch_augmentation(&corpus, &[AgeGroup::Child], (250, 370), 2, 7).unwrap();
        assert_eq!(plan.jobs.len(), 6);
        assert!((plan.expected_added_hours - 14.74).abs() < 1e-9);
        assert!((plan.expected_added_hours - 14.8).abs() / 14.8 < 0.01);
    }

    #[test]
    fn pitch_plan_reproduces_teen_hours() {
        let records = vec![record("u1", "spk_t", 19152.0, AgeGroup::Teen)];
        let corpus = Corpus::from_records("teen", records).unwrap();
        let plan = plan_pitch_augmentation(&corpus, &[AgeGroup::Teen], (250, 370), 2, 7).unwrap();
        assert!((plan.expected_added_hours - 10.64).abs() < 1e-9);
        assert!((plan.expected_added_hours - 10.6).abs() / 10.6 < 0.01);
    }

    #[test]
    fn pitch_plan_rejects_bad_parameters() {
        let corpus = Corpus::from_records(
            "fixture",
            vec![record("u1", "spk_a", 1.0, AgeGroup::Child)],
        )
        .unwrap();
        assert!(matches!(
            plan_pitch_augmentation(&corpus, &[AgeGroup::Child], (250, 370), 0, 7),
            Err(AugmentError::InvalidPerSpeaker { .. })
        ));
        assert!(matches!(
            plan_pitch_augmentation(&corpus, &[AgeGroup::Child], (370, 250), 2, 7),
            Err(AugmentError::InvalidCentsRange { .. })
        ));
        assert!(matches!(
            plan_pitch_augmentation(&corpus, &[AgeGroup::Child], (250, 251), 3, 7),
            Err(AugmentError::InvalidPerSpeaker { available: 2, .. })
        ));
        assert!(matches!(
            plan_pitch_augmentation(&corpus, &[AgeGroup::Teen], (250, 370), 2, 7),
            Err(AugmentError::EmptySpeakerSet)
        ));
    }

    #[test]
    fn pitch_draws_are_in_range_distinct_and_speaker_local() {
        let records = vec![
            record("u1", "spk_a", 1.0, AgeGroup::Child),
            record("u2", "spk_b", 1.0, AgeGroup::Child),
        ];
        let corpus = Corpus::from_records("fixture", records).unwrap();
        let plan =
            plan_pitch_augmentation(&corpus, &[AgeGroup::Child], (250, 370), 2, 42).unwrap();
        let cents_of = |utterance: &str| -> Vec<i32> {
            plan.jobs
                .iter()
                .filter_map(|j| match j {
                    Job::Pitch(p) if p.source_utterance_id == utterance => Some(p.cents),
                    _ => None,
                })
                .collect()
        };
        for job in &plan.jobs {
            let Job::Pitch(job) = job else { panic!("expected pitch job") };
            assert!((250..=370).contains(&job.cents));
            assert_eq!(
                job.output_utterance_id,
                format!("{}__ps{}", job.source_utterance_id, job.cents)
            );
        }
        let a = cents_of("u1");
        assert_eq!(a.len(), 2);
        assert_ne!(a[0], a[1]);

        let reduced = Corpus::from_records(
            "fixture",
            vec![record("u1", "spk_a", 1.0, AgeGroup::Child)],
        )
        .unwrap();
        let replanned =
            plan_pitch_augmentation(&reduced, &[AgeGroup::Child], (250, 370), 2, 42).unwrap();
        let replanned_a: Vec<i32> = replanned
            .jobs
            .iter()
            .filter_map(|j| match j {
                Job::Pitch(p) => Some(p.cents),
                Job::Vc(_) => None,
            })
            .collect();
        assert_eq!(a, replanned_a);
        assert_eq!(plan, plan_pitch_augmentation(&corpus, &[AgeGroup::Child], (250, 370), 2, 42)
            .unwrap());
    }

    #[test]
    fn pitch_plan_excludes_generated_records() {
        let mut generated = record("u1__ps300", "spk_a__ps300", 1.0, AgeGroup::Child);
        generated.origin = Origin::PitchShift;
        generated.provenance = Some(Provenance {
            source_utterance_id: "u1".to_owned(),
            target_speaker_id: None,
            shift_cents: Some(300.0),
        });
        let records = vec![record("u1", "spk_a", 1.0, AgeGroup::Child), generated];
        let corpus = Corpus::from_records("fixture", records).unwrap();
        let plan =
            plan_pitch_augmentation(&corpus, &[AgeGroup::Child], (250, 370), 2, 7).unwrap();
        assert_eq!(plan.jobs.len(), 2);
        assert_eq!(plan.excluded.len(), 1);
        assert_eq!(plan.excluded[0].utterance_id, "u1__ps300");
        assert!(plan.excluded[0].reason.contains("pitch_shift"));
    }

    #[test]
    fn vc_plan_is_a_k_fold_product() {
        let mut t2 = record("t2u1", "spk_t2", 3.0, AgeGroup::Child);
        t2.language = Language::Nl;
        let records = vec![
            record("u1", "spk_s", 10.0, AgeGroup::Adult),
            record("u2", "spk_s", 20.0, AgeGroup::Adult),
            record("t1u1", "spk_t1", 5.0, AgeGroup::Child),
            t2,
        ];
        let corpus = Corpus::from_records("fixture", records).unwrap();
        let selection = selection(vec![
            pair("spk_s", "spk_t1", 0.8, 1),
            pair("spk_s", "spk_t2", 0.7, 2),
        ]);
        let plan = plan_vc_augmentation(&corpus, &selection, VcMode::Monolingual).unwrap();
        assert_eq!(plan.jobs.len(), 4);
        assert!((plan.expected_added_hours - 60.0 / 3600.0).abs() < 1e-12);
        let ids: Vec<&str> = plan.jobs.iter().map(|j| j.output_utterance_id()).collect();
        assert_eq!(ids, vec!["u1__vc_spk_t1", "u2__vc_spk_t1", "u1__vc_spk_t2", "u2__vc_spk_t2"]);
    }

    #[test]
    fn vc_plan_rejects_language_mode_mismatch() {
        let records = vec![
            record("u1", "spk_s", 1.0, AgeGroup::Adult),
            record("t1u1", "spk_t1", 1.0, AgeGroup::Child),
        ];
        let corpus = Corpus::from_records("fixture", records).unwrap();
        let selection = selection(vec![pair("spk_s", "spk_t1", 0.8, 1)]);
        let err = plan_vc_augmentation(&corpus, &selection, VcMode::Crosslingual).unwrap_err();
        assert!(matches!(err, AugmentError::LanguageModeMismatch { .. }));
        assert!(plan_vc_augmentation(&corpus, &selection, VcMode::Monolingual).is_ok());
    }

    #[test]
    fn vc_plan_rejects_unknown_speakers() {
        let corpus = Corpus::from_records(
            "fixture",
            vec![record("u1", "spk_s", 1.0, AgeGroup::Adult)],
        )
        .unwrap();
        let selection = selection(vec![pair("spk_s", "spk_ghost", 0.8, 1)]);
        let err = plan_vc_augmentation(&corpus, &selection, VcMode::Monolingual).unwrap_err();
        assert!(matches!(
            err,
            AugmentError::UnknownSpeaker { role: "target", .. }
        ));
    }

    #[test]
    fn standin_convert_maps_f0_onto_target() {
        let source = tone(200.0, 0.6, 16_000);
        let converted = standin_convert(&source, 200.0, 300.0).unwrap();
        let ratio = converted.duration_secs() / source.duration_secs();
        assert!((ratio - 1.0).abs() < 0.01, "duration drifted by {ratio}");
        let track = dsp::estimate_f0(&converted, F0_FRAME_SECS, HOP_SECS).unwrap();
        let f0 = track.median_f0.unwrap();
        assert!((f0 - 300.0).abs() / 300.0 < 0.02, "median F0 {f0}, expected 300");
    }

    #[test]
    fn standin_convert_identity_when_f0s_match() {
        let source = tone(220.0, 0.5, 16_000);
        let converted = standin_convert(&source, 220.0, 220.0).unwrap();
        let ratio = converted.duration_secs() / source.duration_secs();
        assert!((ratio - 1.0).abs() < 0.01);
        let track = dsp::estimate_f0(&converted, F0_FRAME_SECS, HOP_SECS).unwrap();
        let f0 = track.median_f0.unwrap();
        assert!((f0 - 220.0).abs() / 220.0 < 0.02);
    }

    #[test]
    fn standin_convert_clamps_to_one_octave() {
        let source = tone(100.0, 0.6, 16_000);
        let converted = standin_convert(&source, 100.0, 500.0).unwrap();
        let track = dsp::estimate_f0(&converted, F0_FRAME_SECS, HOP_SECS).unwrap();
        let f0 = track.median_f0.unwrap();
        assert!((f0 - 200.0).abs() / 200.0 < 0.02, "median F0 {f0}, expected clamp at 200");
    }

    #[test]
    fn standin_convert_rejects_unvoiced_input() {
        let source = tone(200.0, 0.3, 16_000);
        assert!(matches!(
            standin_convert(&source, 0.0, 300.0),
            Err(AugmentError::UnvoicedSource { .. })
        ));
        assert!(matches!(
            standin_convert(&source, 200.0, 0.0),
            Err(AugmentError::UnvoicedSource { .. })
        ));
    }

    #[test]
    fn executed_pitch_plan_validates_and_preserves_content() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("fixture");
        let out_dir = dir.path().join("out");
        let mut records = vec![
            record("u1", "spk_a", 0.5, AgeGroup::Child),
            record("u2", "spk_a", 0.4, AgeGroup::Child),
        ];
        write_fixture_audio(&mut records, &base, 220.0);
        let corpus = Corpus::from_records("fixture", records).unwrap();

        let plan =
            plan_pitch_augmentation(&corpus, &[AgeGroup::Child], (250, 370), 2, 11).unwrap();
        let outcome =
            execute_plan(&plan, &ConversionBackend::Standin, &corpus, &base, &out_dir).unwrap();
        assert!(outcome.failures.is_empty(), "failures: {:?}", outcome.failures);
        assert_eq!(outcome.corpus.records.len(), 6);
        assert!(outcome.corpus.validate().is_empty());
        assert!(outcome.corpus.validate_audio(&out_dir, 16_000).is_empty());
        let delta = (outcome.realized_added_hours - plan.expected_added_hours).abs();
        assert!(delta / plan.expected_added_hours < 0.01);
        for generated in outcome.corpus.records.iter().filter(|r| r.origin != Origin::Original) {
            assert_eq!(generated.origin, Origin::PitchShift);
            let source = &generated.provenance.as_ref().unwrap().source_utterance_id;
            assert_eq!(&generated.transcript, &corpus.record(source).unwrap().transcript);
        }

        let rerun =
            execute_plan(&plan, &ConversionBackend::Standin, &corpus, &base, &out_dir).unwrap();
        assert_eq!(
            crate::corpus::manifest_string(&rerun.corpus.records).unwrap(),
            crate::corpus::manifest_string(&outcome.corpus.records).unwrap()
        );
        let wav_path = out_dir.join(plan.jobs[0].output_path());
        let first = std::fs::read(&wav_path).unwrap();
        let second = std::fs::read(&wav_path).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn executed_standin_vc_plan_builds_target_voiced_records() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("fixture");
        let out_dir = dir.path().join("out");
        let mut source_records = vec![record("u1", "spk_s", 0.5, AgeGroup::Adult)];
        write_fixture_audio(&mut source_records, &base, 150.0);
        let mut target_records = vec![record("t1u1", "spk_t1", 0.5, AgeGroup::Child)];
        write_fixture_audio(&mut target_records, &base, 300.0);
        source_records.extend(target_records);
        let corpus = Corpus::from_records("fixture", source_records).unwrap();

        let selection = selection(vec![pair("spk_s", "spk_t1", 0.9, 1)]);
        let plan = plan_vc_augmentation(&corpus, &selection, VcMode::Monolingual).unwrap();
        let outcome =
            execute_plan(&plan, &ConversionBackend::Standin, &corpus, &base, &out_dir).unwrap();
        assert!(outcome.failures.is_empty(), "failures: {:?}", outcome.failures);

        let generated = outcome.corpus.record("u1__vc_spk_t1").unwrap();
        assert_eq!(generated.origin, Origin::VcMonolingual);
        assert_eq!(generated.speaker_id, "spk_s__x__spk_t1");
        assert_eq!(generated.age_group, AgeGroup::Child);
        assert_eq!(generated.language, Language::Nl);
        assert_eq!(generated.style, Style::Read);
        assert_eq!(generated.transcript, corpus.record("u1").unwrap().transcript);
        let audio = wav::read_wav(&out_dir.join(&generated.audio_path)).unwrap();
        let f0 = dsp::estimate_f0(&audio, F0_FRAME_SECS, HOP_SECS).unwrap().median_f0.unwrap();
        assert!((f0 - 300.0).abs() / 300.0 < 0.02, "median F0 {f0}, expected 300");
    }

    #[cfg(unix)]
    #[test]
    fn command_backend_partial_failure_is_reported() {
        use std::os::unix::fs::PermissionsExt;

        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("fixture");
        let out_dir = dir.path().join("out");
        let mut source_records = vec![
            record("u1", "spk_s", 0.3, AgeGroup::Adult),
            record("u2", "spk_s", 0.3, AgeGroup::Adult),
        ];
        write_fixture_audio(&mut source_records, &base, 150.0);
        source_records.push(record("t1u1", "spk_ok", 0.3, AgeGroup::Child));
        source_records.push(record("t2u1", "spk_bad", 0.3, AgeGroup::Child));
        let corpus = Corpus::from_records("fixture", source_records).unwrap();

        let script = dir.path().join("fake_vc.py");
        std::fs::write(
            &script,
            r#"import json, shutil, sys
batch = sys.argv[1]
failed = False
with open(batch) as f, open(batch + ".status", "w") as status:
    for line in f:
        job = json.loads(line)
        if job["target_speaker"] == "spk_bad":
            failed = True
            print(json.dumps({"output_wav": job["output_wav"], "ok": False,
                              "message": "no reference audio"}), file=status)
        else:
            shutil.copy(job["source_wav"], job["output_wav"])
            print(json.dumps({"output_wav": job["output_wav"], "ok": True,
                              "message": ""}), file=status)
sys.exit(1 if failed else 0)
"#,
        )
        .unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o644)).unwrap();

        let selection = selection(vec![
            pair("spk_s", "spk_ok", 0.9, 1),
            pair("spk_s", "spk_bad", 0.5, 2),
        ]);
        let plan = plan_vc_augmentation(&corpus, &selection, VcMode::Monolingual).unwrap();
        assert_eq!(plan.jobs.len(), 4);
        let backend = ConversionBackend::Command {
            command: format!("python3 {}", script.display()),
        };
        let outcome = execute_plan(&plan, &backend, &corpus, &base, &out_dir).unwrap();
        assert_eq!(outcome.failures.len(), 2);
        for failure in &outcome.failures {
            assert!(failure.output_utterance_id.ends_with("__vc_spk_bad"));
            assert_eq!(failure.reason, "no reference audio");
        }
        assert_eq!(
            outcome.corpus.records.len(),
            corpus.records.len() + 2,
            "successful jobs must be kept"
        );
        assert!(outcome.corpus.record("u1__vc_spk_ok").is_some());
        assert!(outcome.corpus.record("u2__vc_spk_ok").is_some());
    }
}
