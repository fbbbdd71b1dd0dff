//! Command-line front end. Each subcommand is one file-based pipeline stage.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data errors.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analyze::{self, AnalysisReport};
use crate::classify::{
    self, BinaryModel, EnsembleModel, RemoteBackend, TagSet, TrainConfig, DEFAULT_FEATURE_DIM,
    DEFAULT_THRESHOLD,
};
use crate::corpus::{self, LabeledExample, SplitManifest, DEFAULT_MIN_LEN};
use crate::evalstat::{self, EvalReport, MultiLabelReport, DEFAULT_BOOTSTRAP_ITERATIONS};
use crate::ingest::{self, IssueRecord, RuleSet};
use crate::quality::{QualityAttribute, QualitySet};
use crate::serve::{StubBackend, StubServer};
use crate::table::TextTable;

pub const BACKEND_URL_ENV: &str = "QUALITAGGER_BACKEND_URL";

#[derive(Debug, Parser)]
#[command(name = "qualitagger", version, about = "Mine, tag and analyze software-quality concerns in issue trackers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse event archives (plain or gzip JSONL) into issue records.
    Mine(MineArgs),
    /// Normalize text, drop short, non-English and duplicate issues.
    Clean(CleanArgs),
    /// Build a balanced binary dataset per quality.
    BuildDataset(BuildDatasetArgs),
    /// Write a seeded train/test split with stratified folds.
    Split(SplitArgs),
    /// Train a built-in binary model.
    Train(TrainArgs),
    /// Tag issues with the seven-model ensemble.
    Tag(TagArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Compare two classifiers on the same instances.
    Compare(CompareArgs),
    /// Frequencies, co-occurrence, peaks and language counts over tagged issues.
    Analyze(AnalyzeArgs),
    /// Run a stub scoring backend speaking the wire protocol.
    ServeStub(ServeStubArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Event archive(s); later files win for repeated issues.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Output issues JSONL (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep only issues with at least one quality label.
    #[arg(long)]
    pub labeled_only: bool,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    /// Issues JSONL (plain or gzip).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Minimum normalized length of title plus body.
    #[arg(long, default_value_t = DEFAULT_MIN_LEN)]
    pub min_len: usize,
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    /// Cleaned issues JSONL.
    #[arg(long)]
    pub input: PathBuf,
    /// Quality to build for; all seven when omitted (then --out is a directory).
    #[arg(long)]
    pub quality: Option<QualityAttribute>,
    #[arg(long)]
    pub seed: u64,
    /// Output dataset JSONL, or directory of `{quality}.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Dataset JSONL.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Number of stratified folds over the training part.
    #[arg(long, default_value_t = 5, value_parser = parse_k)]
    pub k: usize,
    /// Fraction of examples held out for testing.
    #[arg(long, default_value_t = 0.2, conflicts_with = "holdout_repo")]
    pub test_fraction: f64,
    /// Hold out a whole repository; `auto` picks the one with most positives.
    #[arg(long)]
    pub holdout_repo: Option<String>,
    /// Output manifest JSON (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset JSONL for one quality.
    #[arg(long)]
    pub input: PathBuf,
    /// Restrict training to the manifest's train part.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Model file, or an existing directory to write `{quality}.qtag` into.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = DEFAULT_FEATURE_DIM)]
    pub feature_dim: usize,
    /// Decision threshold used in the report.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = parse_threshold)]
    pub threshold: f64,
    /// Run cross-validation over the manifest's folds.
    #[arg(long, requires = "manifest")]
    pub cv: bool,
    /// Write test-set and fold reports as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TagArgs {
    /// Issues JSONL.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory holding `{quality}.qtag` for all seven qualities.
    #[arg(long, conflicts_with = "backend_url")]
    pub model_dir: Option<PathBuf>,
    /// Remote scoring backend.
    #[arg(long, env = BACKEND_URL_ENV)]
    pub backend_url: Option<String>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = parse_threshold)]
    pub threshold: f64,
    /// Scrub / force-tag rules JSONL.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predictions JSONL: `{id, score | scores | pred_set, [truth | true_set]}`.
    #[arg(long)]
    pub preds: PathBuf,
    /// Ground truth JSONL joined on id: `{id, truth | true_set | labels}`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Evaluate a single quality out of multi-label records.
    #[arg(long)]
    pub quality: Option<QualityAttribute>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = parse_threshold)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Predictions of model A.
    #[arg(long)]
    pub a: PathBuf,
    /// Predictions of model B.
    #[arg(long)]
    pub b: PathBuf,
    /// Ground truth joined on id; otherwise read from model A's records.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub quality: Option<QualityAttribute>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_parser = parse_threshold)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Tagged issues JSONL.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file; a directory of per-table files for `--format csv`.
    #[arg(long, required_if_eq("format", "csv"))]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeStubArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Port to bind; 0 picks a free one.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Serve the `.qtag` models found in this directory.
    #[arg(long, conflicts_with = "score")]
    pub model_dir: Option<PathBuf>,
    /// Answer every request with this constant score.
    #[arg(long, default_value_t = 0.5)]
    pub score: f64,
    /// Speak JSON lines over stdin/stdout instead of HTTP.
    #[arg(long)]
    pub stdio: bool,
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if t > 0.0 && t < 1.0 {
        Ok(t)
    } else {
        Err(format!("threshold must lie in (0, 1), got {t}"))
    }
}

fn parse_k(s: &str) -> Result<usize, String> {
    let k: usize = s.parse().map_err(|e| format!("{e}"))?;
    if k >= 2 {
        Ok(k)
    } else {
        Err(format!("k must be at least 2, got {k}"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

macro_rules! data_error_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_error_from!(
    io::Error,
    serde_json::Error,
    ingest::IngestError,
    corpus::CorpusError,
    classify::ClassifyError,
    evalstat::EvalError,
    analyze::AnalyzeError,
    csv::Error
);

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Mine(a) => mine(a),
        Command::Clean(a) => clean(a),
        Command::BuildDataset(a) => build_dataset(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Tag(a) => tag(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::ServeStub(a) => serve_stub(a),
    }
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn with_path<T, E: std::fmt::Display>(path: &Path, r: Result<T, E>) -> CliResult<T> {
    r.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Writes to `path`, or stdout when `None`.
fn write_out<F>(path: Option<&Path>, body: F) -> CliResult<()>
where
    F: FnOnce(&mut dyn Write) -> CliResult<()>,
{
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            body(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            body(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    write_out(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn read_issues_file(path: &Path) -> CliResult<Vec<IssueRecord>> {
    with_path(path, ingest::read_issues(open(path)?))
}

fn read_dataset_file(path: &Path) -> CliResult<Vec<LabeledExample>> {
    with_path(path, corpus::read_dataset(open(path)?))
}

fn mine(a: MineArgs) -> CliResult<()> {
    let mut merged: BTreeMap<(String, String), IssueRecord> = BTreeMap::new();
    let (mut lines, mut events, mut skipped) = (0, 0, 0);
    for path in &a.input {
        let outcome = with_path(path, ingest::parse_event_stream(open(path)?))?;
        lines += outcome.lines;
        events += outcome.issue_events;
        skipped += outcome.skipped;
        for r in outcome.records {
            merged.insert((r.repo.clone(), r.id.clone()), r);
        }
    }
    let records: Vec<IssueRecord> = merged
        .into_values()
        .filter(|r| !a.labeled_only || !r.qualities().is_empty())
        .collect();
    eprintln!(
        "mine: {lines} lines, {events} issue events, {skipped} skipped, {} issues written",
        records.len()
    );
    write_out(a.out.as_deref(), |w| Ok(ingest::write_issues(w, &records)?))
}

fn clean(a: CleanArgs) -> CliResult<()> {
    let records = read_issues_file(&a.input)?;
    let (kept, stats) = corpus::clean_records(records, a.min_len);
    eprintln!("clean: {}", serde_json::to_string(&stats)?);
    write_out(a.out.as_deref(), |w| Ok(ingest::write_issues(w, &kept)?))
}

fn build_dataset(a: BuildDatasetArgs) -> CliResult<()> {
    let seed = a.seed;
    let annotated = corpus::annotate(read_issues_file(&a.input)?);
    match a.quality {
        Some(q) => {
            let ds = corpus::build_binary_dataset(&annotated, q, seed)?;
            eprintln!("build-dataset: {q}: {} examples", ds.len());
            write_out(Some(&a.out), |w| Ok(corpus::write_dataset(w, &ds)?))
        }
        None => {
            std::fs::create_dir_all(&a.out)
                .map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
            for q in QualityAttribute::ALL {
                match corpus::build_binary_dataset(&annotated, q, seed) {
                    Ok(ds) => {
                        eprintln!("build-dataset: {q}: {} examples", ds.len());
                        let path = a.out.join(format!("{}.jsonl", q.name()));
                        write_out(Some(&path), |w| Ok(corpus::write_dataset(w, &ds)?))?;
                    }
                    Err(e @ (corpus::CorpusError::EmptyDataset(_) | corpus::CorpusError::NoNegatives(_))) => {
                        log::warn!("skipping {q}: {e}");
                        eprintln!("build-dataset: {q}: skipped ({e})");
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Ok(())
        }
    }
}

fn split(a: SplitArgs) -> CliResult<()> {
    let seed = a.seed;
    let ds = read_dataset_file(&a.input)?;
    let manifest = match a.holdout_repo.as_deref() {
        Some(repo) => {
            let repo = if repo == "auto" {
                corpus::dataset_held_out_repo(&ds)?
            } else {
                repo.to_string()
            };
            corpus::repo_split(&ds, &repo, a.k, seed)?.manifest(Some(repo))
        }
        None => {
            if !(a.test_fraction > 0.0 && a.test_fraction < 1.0) {
                return Err(CliError::Usage(format!(
                    "--test-fraction must lie in (0, 1), got {}",
                    a.test_fraction
                )));
            }
            corpus::holdout_split(&ds, a.test_fraction, a.k, seed)?.manifest(None)
        }
    };
    write_json(a.out.as_deref(), &manifest)
}

#[derive(Debug, Serialize)]
struct TrainReport {
    quality: QualityAttribute,
    train_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<EvalReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    folds: Vec<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cv_mean_f1: Option<f64>,
}

fn evaluate_model(model: &BinaryModel, examples: &[LabeledExample], threshold: f64) -> CliResult<EvalReport> {
    let scores: Vec<f64> = examples.iter().map(|e| model.score(&e.text)).collect();
    let truths: Vec<bool> = examples.iter().map(LabeledExample::is_positive).collect();
    Ok(EvalReport::compute(&scores, &truths, threshold)?)
}

fn train(a: TrainArgs) -> CliResult<()> {
    let config = TrainConfig {
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        weight_decay: a.weight_decay,
        seed: a.seed,
        batch_size: a.batch_size,
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if !a.feature_dim.is_power_of_two() {
        return Err(CliError::Usage(format!(
            "--feature-dim must be a power of two, got {}",
            a.feature_dim
        )));
    }

    let ds = read_dataset_file(&a.input)?;
    let quality = ds
        .first()
        .map(|e| e.quality)
        .ok_or_else(|| CliError::Data(format!("{}: dataset is empty", a.input.display())))?;
    if let Some(other) = ds.iter().find(|e| e.quality != quality) {
        return Err(CliError::Data(format!(
            "{}: dataset mixes qualities '{quality}' and '{}'",
            a.input.display(),
            other.quality
        )));
    }

    let split = match &a.manifest {
        Some(path) => {
            let manifest: SplitManifest = with_path(path, serde_json::from_reader(BufReader::new(open(path)?)))?;
            Some(manifest.apply(&ds))
        }
        None => None,
    };
    let train_set = split.as_ref().map_or(&ds, |s| &s.train);
    let model = classify::train_binary_with(train_set, &config, a.feature_dim)?;

    let out = if a.out.is_dir() {
        a.out.join(format!("{}.qtag", quality.name()))
    } else {
        a.out.clone()
    };
    write_out(Some(&out), |w| Ok(model.write_to(w)?))?;

    let mut report = TrainReport {
        quality,
        train_size: train_set.len(),
        test: None,
        folds: Vec::new(),
        cv_mean_f1: None,
    };
    if let Some(s) = &split {
        if !s.test.is_empty() {
            report.test = Some(evaluate_model(&model, &s.test, a.threshold)?);
        }
        if a.cv {
            for fold in s.folds.iter().flatten() {
                let held: std::collections::HashSet<usize> = fold.iter().copied().collect();
                let (fit, val): (Vec<_>, Vec<_>) = s
                    .train
                    .iter()
                    .enumerate()
                    .partition(|(i, _)| !held.contains(i));
                let fit: Vec<LabeledExample> = fit.into_iter().map(|(_, e)| e.clone()).collect();
                let val: Vec<LabeledExample> = val.into_iter().map(|(_, e)| e.clone()).collect();
                let fold_model = classify::train_binary_with(&fit, &config, a.feature_dim)?;
                report.folds.push(evaluate_model(&fold_model, &val, a.threshold)?);
            }
            if !report.folds.is_empty() {
                let sum: f64 = report.folds.iter().map(|r| r.f1).sum();
                report.cv_mean_f1 = Some(sum / report.folds.len() as f64);
            }
        }
    }
    if let Some(path) = &a.report {
        write_json(Some(path), &report)?;
    }
    eprintln!("train: {quality}: {} examples -> {}", train_set.len(), out.display());
    Ok(())
}

/// One line of `tag` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedRecord {
    #[serde(flatten)]
    pub tags: TagSet,
    pub repo: String,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo_language: Option<String>,
}

const TAG_BATCH: usize = 256;

fn tag(a: TagArgs) -> CliResult<()> {
    let ensemble = match (&a.model_dir, &a.backend_url) {
        (Some(dir), _) => EnsembleModel::load_dir(dir, a.threshold)?,
        (None, Some(url)) => {
            let backend = RemoteBackend::http(url, classify::remote::DEFAULT_TIMEOUT).with_retries(2);
            EnsembleModel::remote(Arc::new(backend), a.threshold)?
        }
        (None, None) => {
            return Err(CliError::Usage(format!(
                "tag needs --model-dir or --backend-url (or {BACKEND_URL_ENV})"
            )))
        }
    };
    let rules = match &a.rules {
        Some(path) => with_path(path, ingest::read_rules(open(path)?))?,
        None => Vec::new(),
    };
    let rules = RuleSet::new(&rules)?;
    let records = read_issues_file(&a.input)?;

    let mut failed = 0usize;
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(TAG_BATCH) {
        for (tags, r) in classify::tag_batch(&ensemble, chunk, &rules).into_iter().zip(chunk) {
            failed += tags.is_error() as usize;
            out.push(TaggedRecord {
                tags,
                repo: r.repo.clone(),
                created_at: r.created_at,
                repo_language: r.repo_language.clone(),
            });
        }
    }
    if failed > 0 {
        log::warn!("{failed} issues tagged with failed ensemble members");
        eprintln!("tag: warning: {failed} issues have failed ensemble members");
    }
    write_out(a.out.as_deref(), |w| {
        for rec in &out {
            serde_json::to_writer(&mut *w, rec)?;
            writeln!(w)?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum TruthValue {
    Bool(bool),
    Int(u8),
}

impl TruthValue {
    fn as_bool(self) -> bool {
        match self {
            TruthValue::Bool(b) => b,
            TruthValue::Int(i) => i != 0,
        }
    }
}

/// A prediction and/or truth record as accepted by `evaluate` and `compare`.
#[derive(Debug, Clone, Default, Deserialize)]
struct EvalLine {
    #[serde(alias = "issue_id", alias = "source_id")]
    id: String,
    score: Option<f64>,
    scores: Option<BTreeMap<QualityAttribute, f64>>,
    #[serde(alias = "predicted")]
    pred_set: Option<QualitySet>,
    #[serde(alias = "label")]
    truth: Option<TruthValue>,
    true_set: Option<QualitySet>,
    labels: Option<Vec<String>>,
}

impl EvalLine {
    fn merge_truth(&mut self, other: &EvalLine) {
        if self.truth.is_none() {
            self.truth = other.truth;
        }
        if self.true_set.is_none() {
            self.true_set = other.true_set.or_else(|| other.labels.as_ref().map(|l| ingest::match_quality_labels(l)));
        }
    }

    fn true_set(&self) -> Option<QualitySet> {
        self.true_set.or_else(|| self.labels.as_ref().map(|l| ingest::match_quality_labels(l)))
    }

    fn pred_set(&self, threshold: f64) -> Option<QualitySet> {
        self.pred_set.or_else(|| {
            self.scores
                .as_ref()
                .map(|s| s.iter().filter(|(_, &v)| v >= threshold).map(|(&q, _)| q).collect())
        })
    }

    fn binary_score(&self, quality: Option<QualityAttribute>) -> Option<f64> {
        match quality {
            None => self.score,
            Some(q) => self
                .scores
                .as_ref()
                .and_then(|s| s.get(&q).copied())
                .or_else(|| self.pred_set.map(|p| f64::from(u8::from(p.contains(q)))))
                .or(self.score),
        }
    }

    fn binary_truth(&self, quality: Option<QualityAttribute>) -> Option<bool> {
        match quality {
            None => self.truth.map(TruthValue::as_bool),
            Some(q) => self
                .true_set()
                .map(|t| t.contains(q))
                .or(self.truth.map(TruthValue::as_bool)),
        }
    }
}

fn read_eval_lines(path: &Path, truth: Option<&HashMap<String, EvalLine>>) -> CliResult<Vec<EvalLine>> {
    let reader = with_path(path, ingest::open_maybe_gzip(open(path)?))?;
    let mut lines = with_path(path, ingest::read_jsonl(reader, |_: &EvalLine| Ok(())))?;
    if lines.is_empty() {
        return Err(CliError::Data(format!("{}: no records", path.display())));
    }
    if let Some(truth) = truth {
        for line in &mut lines {
            let t = truth.get(&line.id).ok_or_else(|| {
                CliError::Data(format!("{}: id '{}' has no ground truth", path.display(), line.id))
            })?;
            line.merge_truth(t);
        }
    }
    Ok(lines)
}

fn read_truth_map(path: Option<&Path>) -> CliResult<Option<HashMap<String, EvalLine>>> {
    let Some(path) = path else { return Ok(None) };
    let reader = with_path(path, ingest::open_maybe_gzip(open(path)?))?;
    let lines: Vec<EvalLine> = with_path(path, ingest::read_jsonl(reader, |_: &EvalLine| Ok(())))?;
    Ok(Some(lines.into_iter().map(|l| (l.id.clone(), l)).collect()))
}

fn binary_vectors(
    lines: &[EvalLine],
    quality: Option<QualityAttribute>,
    source: &Path,
) -> CliResult<(Vec<f64>, Vec<bool>)> {
    lines
        .iter()
        .map(|l| {
            let missing = |what: &str| CliError::Data(format!("{}: id '{}' lacks {what}", source.display(), l.id));
            Ok((
                l.binary_score(quality).ok_or_else(|| missing("a score"))?,
                l.binary_truth(quality).ok_or_else(|| missing("a truth value"))?,
            ))
        })
        .collect::<CliResult<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}

fn set_vectors(lines: &[EvalLine], threshold: f64, source: &Path) -> CliResult<(Vec<QualitySet>, Vec<QualitySet>)> {
    lines
        .iter()
        .map(|l| {
            let missing = |what: &str| CliError::Data(format!("{}: id '{}' lacks {what}", source.display(), l.id));
            Ok((
                l.pred_set(threshold).ok_or_else(|| missing("a predicted set"))?,
                l.true_set().ok_or_else(|| missing("a true set"))?,
            ))
        })
        .collect::<CliResult<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}

fn is_binary(lines: &[EvalLine]) -> bool {
    lines.iter().all(|l| l.score.is_some() && l.truth.is_some())
}

#[derive(Debug, Serialize)]
struct MultiLabelEvaluation {
    multilabel: MultiLabelReport,
    per_quality: BTreeMap<QualityAttribute, EvalReport>,
}

fn emit_tables(path: Option<&Path>, format: Format, tables: &[(&str, TextTable)]) -> CliResult<()> {
    write_out(path, |w| {
        for (i, (title, table)) in tables.iter().enumerate() {
            match format {
                Format::Text => {
                    if tables.len() > 1 {
                        if i > 0 {
                            writeln!(w)?;
                        }
                        writeln!(w, "{title}")?;
                    }
                    write!(w, "{table}")?;
                }
                Format::Csv => table.write_csv(&mut *w)?,
                Format::Json => unreachable!("json handled by caller"),
            }
        }
        Ok(())
    })
}

fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let truth = read_truth_map(a.truth.as_deref())?;
    let lines = read_eval_lines(&a.preds, truth.as_ref())?;
    if a.quality.is_some() || is_binary(&lines) {
        let (scores, truths) = binary_vectors(&lines, a.quality, &a.preds)?;
        let report = EvalReport::compute(&scores, &truths, a.threshold)?;
        let name = a.quality.map_or("model", QualityAttribute::title);
        return match a.format {
            Format::Json => write_json(a.out.as_deref(), &report),
            f => emit_tables(a.out.as_deref(), f, &[("evaluation", evalstat::eval_table([(name, &report)]))]),
        };
    }

    let (preds, truths) = set_vectors(&lines, a.threshold, &a.preds)?;
    let multilabel = MultiLabelReport::compute(&preds, &truths)?;
    let mut per_quality = BTreeMap::new();
    for q in QualityAttribute::ALL {
        let (scores, t) = binary_vectors(&lines, Some(q), &a.preds)?;
        per_quality.insert(q, EvalReport::compute(&scores, &t, a.threshold)?);
    }
    let result = MultiLabelEvaluation {
        multilabel,
        per_quality,
    };
    match a.format {
        Format::Json => write_json(a.out.as_deref(), &result),
        f => {
            let rows: Vec<(&str, &EvalReport)> = result.per_quality.iter().map(|(q, r)| (q.title(), r)).collect();
            emit_tables(
                a.out.as_deref(),
                f,
                &[
                    ("per-quality", evalstat::eval_table(rows)),
                    ("multi-label", evalstat::multilabel_table(&result.multilabel)),
                ],
            )
        }
    }
}

#[derive(Debug, Serialize)]
struct CategoryComparison {
    category: String,
    #[serde(flatten)]
    report: evalstat::ComparisonReport,
}

fn compare(a: CompareArgs) -> CliResult<()> {
    let seed = a.seed;
    if a.iterations == 0 {
        return Err(CliError::Usage("--iterations must be at least 1".into()));
    }
    let truth = read_truth_map(a.truth.as_deref())?;
    let lines_a = read_eval_lines(&a.a, truth.as_ref())?;
    let lines_b = read_eval_lines(&a.b, None)?;
    let by_id: HashMap<&str, &EvalLine> = lines_b.iter().map(|l| (l.id.as_str(), l)).collect();
    let lines_b: Vec<EvalLine> = lines_a
        .iter()
        .map(|la| {
            by_id.get(la.id.as_str()).map(|lb| (*lb).clone()).ok_or_else(|| {
                CliError::Data(format!("{}: id '{}' missing", a.b.display(), la.id))
            })
        })
        .collect::<CliResult<_>>()?;

    let categories: Vec<Option<QualityAttribute>> = match a.quality {
        Some(q) => vec![Some(q)],
        None if is_binary(&lines_a) && lines_b.iter().all(|l| l.score.is_some()) => vec![None],
        None => QualityAttribute::ALL.into_iter().map(Some).collect(),
    };

    let mut rows = Vec::new();
    for cat in categories {
        let (sa, truths) = binary_vectors(&lines_a, cat, &a.a)?;
        let sb: Vec<f64> = lines_b
            .iter()
            .map(|l| {
                l.binary_score(cat)
                    .ok_or_else(|| CliError::Data(format!("{}: id '{}' lacks a score", a.b.display(), l.id)))
            })
            .collect::<CliResult<_>>()?;
        let pa: Vec<bool> = sa.iter().map(|&s| s >= a.threshold).collect();
        let pb: Vec<bool> = sb.iter().map(|&s| s >= a.threshold).collect();
        let report = evalstat::compare(&pa, &pb, &truths, a.iterations, seed)?;
        rows.push(CategoryComparison {
            category: cat.map_or("model".to_string(), |q| q.name().to_string()),
            report,
        });
    }
    match a.format {
        Format::Json => write_json(a.out.as_deref(), &rows),
        f => {
            let table = evalstat::comparison_table(rows.iter().map(|r| (r.category.as_str(), &r.report)));
            emit_tables(a.out.as_deref(), f, &[("comparison", table)])
        }
    }
}

fn analyze_cmd(a: AnalyzeArgs) -> CliResult<()> {
    let tagged = with_path(&a.input, analyze::read_tagged(open(&a.input)?))?;
    if tagged.is_empty() {
        return Err(CliError::Data(format!("{}: no tagged issues", a.input.display())));
    }
    let report: AnalysisReport = analyze::analyze(&tagged)?;
    match a.format {
        Format::Json => write_json(a.out.as_deref(), &report),
        Format::Text => emit_tables(a.out.as_deref(), Format::Text, &report.tables()),
        Format::Csv => {
            let dir = a.out.as_deref().expect("clap requires --out for csv");
            std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
            for (name, table) in report.tables() {
                let path = dir.join(format!("{name}.csv"));
                write_out(Some(&path), |w| Ok(table.write_csv(w)?))?;
            }
            Ok(())
        }
    }
}

fn serve_stub(a: ServeStubArgs) -> CliResult<()> {
    let backend = match &a.model_dir {
        Some(dir) => StubBackend::load_dir(dir)?,
        None => StubBackend::fixed(a.score).map_err(|e| CliError::Usage(e.to_string()))?,
    };
    if a.stdio {
        let stdin = io::stdin();
        let stdout = io::stdout();
        backend.serve_stdio(stdin.lock(), stdout.lock())?;
        return Ok(());
    }
    let server = StubServer::start(backend, &format!("{}:{}", a.host, a.port))
        .map_err(|e| CliError::Data(format!("cannot bind {}:{}: {e}", a.host, a.port)))?;
    println!("{}", server.url());
    io::stdout().flush()?;
    server.wait();
    Ok(())
}
