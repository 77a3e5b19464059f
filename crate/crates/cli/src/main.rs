//! voxaug: corpus-augmentation pipeline for low-resource child speech,
//! exposed as subcommands over shared manifest, embedding, pair, score, and
//! report file formats.
//!
//! Exit codes: 0 on success, 1 on a domain error (printed to stderr as
//! `error: ...`), 2 on a usage error (clap's help text).

mod config;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use voxaug_core::augment::{
    self, AugmentationPlan, ConversionBackend, ExecutionOutcome, VcMode,
};
use voxaug_core::corpus::{
    self, AgeGroup, Corpus, Language, Origin, Style, SubsetFilter,
};
use voxaug_core::dsp::AudioBuffer;
use voxaug_core::embeddings::{
    acoustic_summary_embedding, build_similarity_matrix, read_embeddings, write_embeddings,
    Embedding, SimilarityMatrix,
};
use voxaug_core::exec;
use voxaug_core::pairing::{self, Strategy};
use voxaug_core::quality::{self, AsrBackend, QualityLevel, QualityMode};
use voxaug_core::report::{read_rows, render_table, TableFormat};
use voxaug_core::scoring::{self, ScoreReport, ScoreRow};
use voxaug_core::significance::{mapsswe, segments_for_corpus};
use voxaug_core::wav;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "voxaug", version, about = "Corpus augmentation toolkit for child speech")]
struct Cli {
    /// TOML run configuration supplying defaults (see the config module docs).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global random seed; overrides the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages (default: logical CPU count).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print planned actions and hour deltas without writing outputs.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Inspect and validate corpus manifests.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Compute or import speaker embeddings.
    #[command(subcommand)]
    Embed(EmbedCmd),
    /// Select source-target conversion pairs.
    #[command(subcommand)]
    Pairs(PairsCmd),
    /// Plan and execute augmentation.
    #[command(subcommand)]
    Augment(AugmentCmd),
    /// Score hypotheses and compare systems.
    #[command(subcommand)]
    Score(ScoreCmd),
    /// Score and filter generated speech.
    #[command(subcommand)]
    Quality(QualityCmd),
    /// Render experiment summary tables.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Check manifest invariants, optionally probing audio files.
    Validate {
        manifest: PathBuf,
        /// Also check that audio exists with the right rate and duration.
        #[arg(long)]
        audio: bool,
        /// Directory audio paths resolve against (default: manifest's directory).
        #[arg(long)]
        audio_base: Option<PathBuf>,
        /// Expected sample rate for --audio.
        #[arg(long)]
        sample_rate: Option<u32>,
    },
    /// Print hours, speaker counts, and per-attribute breakdowns.
    Stats { manifest: PathBuf },
}

#[derive(Subcommand)]
enum EmbedCmd {
    /// Compute acoustic-summary embeddings for every speaker.
    Compute {
        manifest: PathBuf,
        #[arg(long)]
        audio_base: Option<PathBuf>,
        /// Output embedding file (JSONL).
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate and re-emit an externally computed embedding file.
    Import {
        /// JSONL of {"speaker_id", "vector"} objects.
        vectors: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PairsCmd {
    /// Select k conversion targets per source speaker.
    Select {
        /// Embedding file covering both source and target speakers.
        #[arg(long)]
        embeddings: PathBuf,
        /// Manifest supplying speaker metadata for the filters.
        #[arg(long)]
        manifest: PathBuf,
        /// Source speakers: filter clauses like "age_group=adult,language=nl".
        #[arg(long, value_parser = SubsetFilter::from_str)]
        source_filter: SubsetFilter,
        /// Target speakers, same clause syntax.
        #[arg(long, value_parser = SubsetFilter::from_str)]
        target_filter: SubsetFilter,
        #[arg(long, value_parser = Strategy::from_str)]
        strategy: Option<Strategy>,
        #[arg(long)]
        k: Option<usize>,
        /// Output pair file (JSONL).
        #[arg(long)]
        out: PathBuf,
    },
    /// Write nested top-strategy pair files for k = 2, 4, ..., folds.
    Folds {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_parser = SubsetFilter::from_str)]
        source_filter: SubsetFilter,
        #[arg(long, value_parser = SubsetFilter::from_str)]
        target_filter: SubsetFilter,
        /// Largest fold count (even, at most 10).
        #[arg(long)]
        folds: usize,
        /// Directory receiving pairs_k<k>.jsonl files.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum AugmentCmd {
    /// Plan and render pitch-shifted copies of matching speakers.
    Pitch {
        manifest: PathBuf,
        #[arg(long)]
        audio_base: Option<PathBuf>,
        /// Age groups to augment, e.g. "child" or "child,teen".
        #[arg(long, value_delimiter = ',', value_parser = AgeGroup::from_str)]
        ages: Vec<AgeGroup>,
        #[arg(long, default_value_t = 250)]
        cents_low: i32,
        #[arg(long, default_value_t = 370)]
        cents_high: i32,
        /// Distinct shift values per speaker.
        #[arg(long, default_value_t = 2)]
        per_speaker: usize,
        /// Directory receiving gen/*.wav and augmented.jsonl.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Plan and render voice conversions from a pair file.
    Vc {
        manifest: PathBuf,
        #[arg(long)]
        audio_base: Option<PathBuf>,
        /// Pair file written by `pairs select`.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_parser = VcMode::from_str)]
        mode: VcMode,
        #[arg(long, value_enum, default_value_t = VcBackendKind::Standin)]
        backend: VcBackendKind,
        /// External VC command (with `--backend command`); also settable via
        /// VOXAUG_VC_COMMAND or the config file.
        #[arg(long)]
        vc_command: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VcBackendKind {
    Standin,
    Command,
}

#[derive(Subcommand)]
enum ScoreCmd {
    /// WER report for one hypothesis file.
    Wer {
        manifest: PathBuf,
        /// TSV of <utterance_id><TAB><hypothesis text> lines.
        #[arg(long)]
        hyp: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// MAPSSWE significance test between two hypothesis files.
    Mapsswe {
        manifest: PathBuf,
        #[arg(long)]
        hyp_a: PathBuf,
        #[arg(long)]
        hyp_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum QualityCmd {
    /// Score every utterance through a recognition backend.
    Score {
        manifest: PathBuf,
        #[arg(long)]
        audio_base: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: AsrBackendKind,
        /// Hypothesis file for the scripted backend.
        #[arg(long)]
        hyp: Option<PathBuf>,
        /// External ASR command (with `--backend command`); also settable via
        /// VOXAUG_ASR_COMMAND or the config file.
        #[arg(long)]
        asr_command: Option<String>,
        /// Scratch directory for backend manifest/hypothesis exchange
        /// (default: next to --out).
        #[arg(long)]
        work_dir: Option<PathBuf>,
        /// Output score file (JSONL).
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep the subset of a corpus passing a quality level.
    Filter {
        manifest: PathBuf,
        /// Score file written by `quality score`.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, value_parser = QualityMode::from_str)]
        mode: QualityMode,
        /// Percent level in 10, 20, ..., 100.
        #[arg(long)]
        level: u32,
        /// Output manifest.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AsrBackendKind {
    Echo,
    Scripted,
    Command,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Render a summary table from a JSON row file.
    Table {
        /// JSON array of row objects (label, hours, wer_read, wer_hmi,
        /// wer_avg, optional similarity/stars_read/stars_hmi/is_baseline).
        rows: PathBuf,
        #[arg(long, value_parser = TableFormat::from_str, default_value = "text")]
        format: TableFormat,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flag/config context threaded through command handlers.
struct Ctx {
    config: Option<RunConfig>,
    seed: Option<u64>,
    dry_run: bool,
}

impl Ctx {
    fn require_seed(&self) -> anyhow::Result<u64> {
        self.seed
            .or(self.config.as_ref().map(|c| c.seed))
            .context("no seed given; pass --seed or set one in the config file")
    }

    fn sample_rate(&self, flag: Option<u32>) -> u32 {
        flag.or(self.config.as_ref().and_then(|c| c.dsp.sample_rate)).unwrap_or(16_000)
    }

    fn vc_command(&self, flag: Option<String>) -> anyhow::Result<String> {
        flag.or_else(|| std::env::var("VOXAUG_VC_COMMAND").ok())
            .or_else(|| self.config.as_ref().and_then(|c| c.backends.vc_command.clone()))
            .context(
                "no VC command given; pass --vc-command, set VOXAUG_VC_COMMAND, \
                 or configure backends.vc_command",
            )
    }

    fn asr_command(&self, flag: Option<String>) -> anyhow::Result<String> {
        flag.or_else(|| std::env::var("VOXAUG_ASR_COMMAND").ok())
            .or_else(|| self.config.as_ref().and_then(|c| c.backends.asr_command.clone()))
            .context(
                "no ASR command given; pass --asr-command, set VOXAUG_ASR_COMMAND, \
                 or configure backends.asr_command",
            )
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        exec::configure_threads(jobs);
    }
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(path) => Some(RunConfig::load(path)?),
        None => None,
    };
    let ctx = Ctx { config, seed: cli.seed, dry_run: cli.dry_run };
    match cli.command {
        Cmd::Corpus(cmd) => run_corpus(cmd, &ctx),
        Cmd::Embed(cmd) => run_embed(cmd, &ctx),
        Cmd::Pairs(cmd) => run_pairs(cmd, &ctx),
        Cmd::Augment(cmd) => run_augment(cmd, &ctx),
        Cmd::Score(cmd) => run_score(cmd, &ctx),
        Cmd::Quality(cmd) => run_quality(cmd, &ctx),
        Cmd::Report(cmd) => run_report(cmd, &ctx),
    }
}

/// Directory a manifest's audio paths resolve against.
fn audio_base(manifest: &Path, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| {
        let parent = manifest.parent().unwrap_or(Path::new(""));
        if parent.as_os_str().is_empty() {
            PathBuf::from(".")
        } else {
            parent.to_path_buf()
        }
    })
}

fn run_corpus(cmd: CorpusCmd, ctx: &Ctx) -> anyhow::Result<()> {
    match cmd {
        CorpusCmd::Validate { manifest, audio, audio_base: base, sample_rate } => {
            let corpus = corpus::load_manifest(&manifest)?;
            let mut violations = corpus.validate();
            if audio {
                let base = audio_base(&manifest, base);
                violations.extend(corpus.validate_audio(&base, ctx.sample_rate(sample_rate)));
            }
            for violation in &violations {
                println!("{violation}");
            }
            if !violations.is_empty() {
                bail!("{} validation violation(s) in {}", violations.len(), manifest.display());
            }
            println!(
                "ok: {} record(s), {} speaker(s), 0 violations",
                corpus.records.len(),
                corpus.speakers.len()
            );
            Ok(())
        }
        CorpusCmd::Stats { manifest } => {
            let corpus = corpus::load_manifest(&manifest)?;
            print_stats(&corpus);
            Ok(())
        }
    }
}

fn print_stats(corpus: &Corpus) {
    println!("corpus: {}", corpus.name);
    println!("records: {}", corpus.records.len());
    println!("speakers: {}", corpus.speakers.len());
    println!("hours: {:.2}", corpus.total_hours());

    let hours_where = |pred: &dyn Fn(&corpus::UtteranceRecord) -> bool| {
        corpus.records.iter().filter(|r| pred(r)).map(|r| r.duration).sum::<f64>() / 3600.0
    };
    let mut lines: Vec<(&str, Vec<(String, f64)>)> = Vec::new();
    lines.push((
        "age_group",
        [AgeGroup::Child, AgeGroup::Teen, AgeGroup::Adult]
            .iter()
            .map(|&g| (g.to_string(), hours_where(&|r| r.age_group == g)))
            .collect(),
    ));
    lines.push((
        "style",
        [Style::Read, Style::Hmi, Style::Spontaneous]
            .iter()
            .map(|&s| (s.to_string(), hours_where(&|r| r.style == s)))
            .collect(),
    ));
    lines.push((
        "language",
        [Language::Nl, Language::De, Language::En]
            .iter()
            .map(|&l| (l.to_string(), hours_where(&|r| r.language == l)))
            .collect(),
    ));
    lines.push((
        "origin",
        [Origin::Original, Origin::PitchShift, Origin::VcMonolingual, Origin::VcCrosslingual]
            .iter()
            .map(|&o| (o.to_string(), hours_where(&|r| r.origin == o)))
            .collect(),
    ));
    for (attribute, entries) in lines {
        let text: Vec<String> = entries
            .iter()
            .filter(|(_, hours)| *hours > 0.0)
            .map(|(value, hours)| format!("{value} {hours:.2}"))
            .collect();
        if !text.is_empty() {
            println!("by {attribute}: {}", text.join(", "));
        }
    }
}

fn run_embed(cmd: EmbedCmd, ctx: &Ctx) -> anyhow::Result<()> {
    match cmd {
        EmbedCmd::Compute { manifest, audio_base: base, out } => {
            let corpus = corpus::load_manifest(&manifest)?;
            if ctx.dry_run {
                println!(
                    "dry-run: would embed {} speaker(s) from {} utterance(s) into {}",
                    corpus.speakers.len(),
                    corpus.records.len(),
                    out.display()
                );
                return Ok(());
            }
            let base = audio_base(&manifest, base);
            let embeddings: Vec<Embedding> =
                exec::try_map(&corpus.speakers, |profile| -> anyhow::Result<Embedding> {
                    let buffers: Vec<AudioBuffer> = corpus
                        .records
                        .iter()
                        .filter(|r| r.speaker_id == profile.speaker_id)
                        .map(|r| wav::read_wav(&base.join(&r.audio_path)))
                        .collect::<Result<_, _>>()?;
                    Ok(acoustic_summary_embedding(&profile.speaker_id, &buffers)?)
                })?;
            write_embeddings(&out, &embeddings)?;
            println!("wrote {} embedding(s) to {}", embeddings.len(), out.display());
            Ok(())
        }
        EmbedCmd::Import { vectors, out } => {
            let embeddings = read_embeddings(&vectors)?;
            if ctx.dry_run {
                println!(
                    "dry-run: would import {} embedding(s) into {}",
                    embeddings.len(),
                    out.display()
                );
                return Ok(());
            }
            write_embeddings(&out, &embeddings)?;
            println!("imported {} embedding(s) to {}", embeddings.len(), out.display());
            Ok(())
        }
    }
}

/// Embeddings for the speakers matching `filter`, in corpus speaker order.
fn filtered_embeddings(
    corpus: &Corpus,
    embeddings: &[Embedding],
    filter: &SubsetFilter,
    role: &str,
) -> anyhow::Result<Vec<Embedding>> {
    let by_id: HashMap<&str, &Embedding> =
        embeddings.iter().map(|e| (e.speaker_id.as_str(), e)).collect();
    let mut selected = Vec::new();
    for profile in &corpus.speakers {
        let matches = corpus
            .records
            .iter()
            .any(|r| r.speaker_id == profile.speaker_id && filter.matches(r));
        if !matches {
            continue;
        }
        let embedding = by_id.get(profile.speaker_id.as_str()).with_context(|| {
            format!("no embedding for {role} speaker \"{}\"", profile.speaker_id)
        })?;
        selected.push((*embedding).clone());
    }
    if selected.is_empty() {
        bail!("{role} filter matches no speakers");
    }
    Ok(selected)
}

fn similarity_matrix_for(
    manifest: &Path,
    embeddings_path: &Path,
    source_filter: &SubsetFilter,
    target_filter: &SubsetFilter,
) -> anyhow::Result<SimilarityMatrix> {
    let corpus = corpus::load_manifest(manifest)?;
    let embeddings = read_embeddings(embeddings_path)?;
    let sources = filtered_embeddings(&corpus, &embeddings, source_filter, "source")?;
    let targets = filtered_embeddings(&corpus, &embeddings, target_filter, "target")?;
    Ok(build_similarity_matrix(&sources, &targets)?)
}

fn run_pairs(cmd: PairsCmd, ctx: &Ctx) -> anyhow::Result<()> {
    match cmd {
        PairsCmd::Select {
            embeddings,
            manifest,
            source_filter,
            target_filter,
            strategy,
            k,
            out,
        } => {
            let strategy = strategy
                .or(ctx.config.as_ref().and_then(|c| c.strategy()))
                .context("no strategy given; pass --strategy or configure pairing.strategy")?;
            let k = k
                .or(ctx.config.as_ref().and_then(|c| c.pairing.k))
                .context("no k given; pass --k or configure pairing.k")?;
            let matrix =
                similarity_matrix_for(&manifest, &embeddings, &source_filter, &target_filter)?;
            let seed = if strategy == Strategy::Random { ctx.require_seed()? } else { 0 };
            let selection = pairing::select_pairs(&matrix, strategy, k, seed, |s, t| s == t)?;
            if ctx.dry_run {
                println!(
                    "dry-run: would write {} pair(s) (strategy {strategy}, k = {k}, \
                     mean similarity {:.4}) to {}",
                    selection.pairs.len(),
                    selection.mean_similarity,
                    out.display()
                );
                return Ok(());
            }
            pairing::write_pairs(&out, &selection)?;
            println!(
                "wrote {} pair(s) (mean similarity {:.4}) to {}",
                selection.pairs.len(),
                selection.mean_similarity,
                out.display()
            );
            Ok(())
        }
        PairsCmd::Folds {
            embeddings,
            manifest,
            source_filter,
            target_filter,
            folds,
            out_dir,
        } => {
            let matrix =
                similarity_matrix_for(&manifest, &embeddings, &source_filter, &target_filter)?;
            let plan = pairing::build_fold_plan(&matrix, folds, |s, t| s == t)?;
            if ctx.dry_run {
                for selection in &plan {
                    println!(
                        "dry-run: would write {} pair(s) to {}",
                        selection.pairs.len(),
                        out_dir.join(format!("pairs_k{}.jsonl", selection.k)).display()
                    );
                }
                return Ok(());
            }
            std::fs::create_dir_all(&out_dir)
                .map_err(|e| anyhow::anyhow!("creating {}: {e}", out_dir.display()))?;
            for selection in &plan {
                let path = out_dir.join(format!("pairs_k{}.jsonl", selection.k));
                pairing::write_pairs(&path, selection)?;
                println!("wrote {} pair(s) to {}", selection.pairs.len(), path.display());
            }
            Ok(())
        }
    }
}

fn print_plan(corpus: &Corpus, plan: &AugmentationPlan) {
    let base_hours = corpus.total_hours();
    println!(
        "plan: {} job(s), expected +{:.2} h ({:.2} h -> {:.2} h)",
        plan.jobs.len(),
        plan.expected_added_hours,
        base_hours,
        base_hours + plan.expected_added_hours
    );
    for excluded in &plan.excluded {
        println!("excluded: {}: {}", excluded.utterance_id, excluded.reason);
    }
}

fn finish_execution(
    outcome: &ExecutionOutcome,
    plan: &AugmentationPlan,
    out_dir: &Path,
) -> anyhow::Result<()> {
    let manifest_path = out_dir.join("augmented.jsonl");
    corpus::write_manifest(&outcome.corpus, &manifest_path)?;
    println!(
        "realized +{:.2} h in {} record(s); wrote {}",
        outcome.realized_added_hours,
        outcome.corpus.records.len(),
        manifest_path.display()
    );
    if !outcome.failures.is_empty() {
        for failure in &outcome.failures {
            eprintln!("failed: {}: {}", failure.output_utterance_id, failure.reason);
        }
        bail!(
            "{} of {} job(s) failed; the manifest covers the completed ones",
            outcome.failures.len(),
            plan.jobs.len()
        );
    }
    Ok(())
}

fn run_augment(cmd: AugmentCmd, ctx: &Ctx) -> anyhow::Result<()> {
    match cmd {
        AugmentCmd::Pitch {
            manifest,
            audio_base: base,
            ages,
            cents_low,
            cents_high,
            per_speaker,
            out_dir,
        } => {
            let corpus = corpus::load_manifest(&manifest)?;
            let ages = if ages.is_empty() { vec![AgeGroup::Child] } else { ages };
            let seed = ctx.require_seed()?;
            let plan = augment::plan_pitch_augmentation(
                &corpus,
                &ages,
                (cents_low, cents_high),
                per_speaker,
                seed,
            )?;
            print_plan(&corpus, &plan);
            if ctx.dry_run {
                return Ok(());
            }
            let base = audio_base(&manifest, base);
            let outcome = augment::execute_plan(
                &plan,
                &ConversionBackend::Standin,
                &corpus,
                &base,
                &out_dir,
            )?;
            finish_execution(&outcome, &plan, &out_dir)
        }
        AugmentCmd::Vc { manifest, audio_base: base, pairs, mode, backend, vc_command, out_dir } => {
            let corpus = corpus::load_manifest(&manifest)?;
            let selection = pairing::read_pairs(&pairs)?;
            let plan = augment::plan_vc_augmentation(&corpus, &selection, mode)?;
            print_plan(&corpus, &plan);
            if ctx.dry_run {
                return Ok(());
            }
            let backend = match backend {
                VcBackendKind::Standin => ConversionBackend::Standin,
                VcBackendKind::Command => {
                    ConversionBackend::Command { command: ctx.vc_command(vc_command)? }
                }
            };
            let base = audio_base(&manifest, base);
            let outcome = augment::execute_plan(&plan, &backend, &corpus, &base, &out_dir)?;
            finish_execution(&outcome, &plan, &out_dir)
        }
    }
}

fn print_score_rows(rows: &[&ScoreRow]) {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(4);
    println!("{:<width$}  {:>9}  {:>7}  {:>7}", "set", "ref_words", "errors", "wer%");
    for row in rows {
        println!(
            "{:<width$}  {:>9}  {:>7}  {:>7.2}",
            row.name, row.n_ref_words, row.n_errors, row.wer_percent
        );
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))?;
    Ok(())
}

fn run_score(cmd: ScoreCmd, ctx: &Ctx) -> anyhow::Result<()> {
    match cmd {
        ScoreCmd::Wer { manifest, hyp, out } => {
            let corpus = corpus::load_manifest(&manifest)?;
            let report: ScoreReport = scoring::score_hypotheses(&corpus, &hyp)?;
            let mut rows: Vec<&ScoreRow> = report.rows.iter().collect();
            rows.push(&report.pooled);
            print_score_rows(&rows);
            println!();
            print_score_rows(&report.per_speaker.iter().collect::<Vec<_>>());
            if let Some(out) = out {
                if ctx.dry_run {
                    println!("dry-run: would write {}", out.display());
                } else {
                    write_json(&report, &out)?;
                }
            }
            Ok(())
        }
        ScoreCmd::Mapsswe { manifest, hyp_a, hyp_b, out } => {
            let corpus = corpus::load_manifest(&manifest)?;
            let hypotheses_a = scoring::read_hypotheses(&hyp_a)?;
            let hypotheses_b = scoring::read_hypotheses(&hyp_b)?;
            let segments = segments_for_corpus(&corpus, &hypotheses_a, &hypotheses_b)?;
            let result = mapsswe(&segments)?;
            println!("segments: {}", result.n_segments);
            println!("{}", result.verdict());
            if let Some(out) = out {
                if ctx.dry_run {
                    println!("dry-run: would write {}", out.display());
                } else {
                    write_json(&result, &out)?;
                }
            }
            Ok(())
        }
    }
}

fn run_quality(cmd: QualityCmd, ctx: &Ctx) -> anyhow::Result<()> {
    match cmd {
        QualityCmd::Score { manifest, audio_base: base, backend, hyp, asr_command, work_dir, out } => {
            let corpus = corpus::load_manifest(&manifest)?;
            let backend = match backend {
                AsrBackendKind::Echo => AsrBackend::Echo,
                AsrBackendKind::Scripted => AsrBackend::Scripted {
                    hypotheses: hyp.context("the scripted backend needs --hyp")?,
                },
                AsrBackendKind::Command => AsrBackend::Command {
                    command: ctx.asr_command(asr_command)?,
                },
            };
            if ctx.dry_run {
                println!(
                    "dry-run: would score {} utterance(s) into {}",
                    corpus.records.len(),
                    out.display()
                );
                return Ok(());
            }
            let base = audio_base(&manifest, base);
            let work_dir = work_dir.unwrap_or_else(|| {
                out.parent().unwrap_or(Path::new(".")).join("asr_work")
            });
            let scores = quality::score_generated(&corpus, &backend, &base, &work_dir)?;
            quality::write_scores(&out, &scores)?;
            let mean = scores.iter().map(|s| s.wer_percent).sum::<f64>() / scores.len() as f64;
            println!(
                "scored {} utterance(s), mean WER {mean:.2}%; wrote {}",
                scores.len(),
                out.display()
            );
            Ok(())
        }
        QualityCmd::Filter { manifest, scores, mode, level, out } => {
            let corpus = corpus::load_manifest(&manifest)?;
            let scores = quality::read_scores(&scores)?;
            let level = QualityLevel::new(mode, level)?;
            let kept = quality::filter_by_level(&scores, &corpus, level)?;
            println!(
                "level {} {}: kept {} of {} record(s), {:.2} of {:.2} h",
                level.level,
                level.mode,
                kept.records.len(),
                corpus.records.len(),
                kept.total_hours(),
                corpus.total_hours()
            );
            if ctx.dry_run {
                println!("dry-run: would write {}", out.display());
                return Ok(());
            }
            corpus::write_manifest(&kept, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn run_report(cmd: ReportCmd, ctx: &Ctx) -> anyhow::Result<()> {
    match cmd {
        ReportCmd::Table { rows, format, out } => {
            let rows = read_rows(&rows)?;
            let document = render_table(&rows, format)?;
            match out {
                Some(out) if !ctx.dry_run => {
                    std::fs::write(&out, &document)
                        .map_err(|e| anyhow::anyhow!("writing {}: {e}", out.display()))?;
                    println!("wrote {}", out.display());
                }
                Some(out) => println!("dry-run: would write {}", out.display()),
                None => print!("{document}"),
            }
            Ok(())
        }
    }
}
