//! Text cleaning, deduplication, balanced dataset construction and splits.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, BufReader, Read, Write};
use std::sync::LazyLock;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::hash::fnv1a64;
use crate::ingest::{read_jsonl, IngestError, IssueRecord};
use crate::quality::{QualityAttribute, QualitySet};

pub const DEFAULT_MIN_LEN: usize = 30;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("no positive examples for quality '{0}'")]
    EmptyDataset(QualityAttribute),
    #[error("no negative candidates for quality '{0}'")]
    NoNegatives(QualityAttribute),
    #[error("cannot stratify into {k} folds: class {class} has only {count} members")]
    Stratification { k: usize, class: u8, count: usize },
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("leave-one-out for '{quality}' needs positives in at least 2 repos, found {repos}")]
    TooFewRepos {
        quality: QualityAttribute,
        repos: usize,
    },
    #[error("invalid test fraction {0}")]
    InvalidFraction(f64),
    #[error(transparent)]
    Io(#[from] IngestError),
}

static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:[a-z][a-z0-9+.\-]*://|www\.)\S*").unwrap());

fn is_emoji_or_invisible(c: char) -> bool {
    if c.is_whitespace() {
        return false;
    }
    c.is_control()
        || matches!(c as u32,
            0x200B..=0x200F
            | 0x2028..=0x202E
            | 0x2060..=0x206F
            | 0xFE00..=0xFE0F
            | 0xFEFF
            | 0x2600..=0x27BF
            | 0x2B00..=0x2BFF
            | 0x1F000..=0x1FAFF
            | 0xE0000..=0xE007F)
}

fn is_kept(c: char) -> bool {
    c.is_ascii_lowercase()
        || c.is_ascii_digit()
        || c == ' '
        || matches!(c, '.' | ',' | ';' | ':' | '!' | '?' | '\'' | '"' | '(' | ')' | '-' | '_' | '/')
}

/// Applies the cleaning pipeline without a length check.
pub fn normalize_text(raw: &str) -> String {
    let lowered: String = raw
        .to_lowercase()
        .chars()
        .filter(|&c| !is_emoji_or_invisible(c))
        .collect();
    let no_urls = URL_RE.replace_all(&lowered, " ");
    let replaced: String = no_urls
        .chars()
        .map(|c| if is_kept(c) { c } else { ' ' })
        .collect();
    replaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Cleans `raw`; returns `None` when the result has fewer than `min_len`
/// characters.
pub fn clean_text(raw: &str, min_len: usize) -> Option<String> {
    let cleaned = normalize_text(raw);
    (cleaned.chars().count() >= min_len).then_some(cleaned)
}

const FUNCTION_WORDS: [&str; 50] = [
    "the", "of", "and", "a", "to", "in", "is", "it", "that", "for", "on", "with", "as", "was",
    "be", "this", "by", "not", "are", "at", "or", "from", "but", "an", "have", "has", "i", "you",
    "we", "they", "he", "she", "if", "when", "which", "can", "will", "do", "does", "there", "all",
    "so", "no", "what", "how", "my", "our", "would", "should", "been",
];

/// Cheap deterministic English check: ≥ 90% of letters are ASCII and at
/// least one common English function word appears as a token.
pub fn is_english(text: &str) -> bool {
    let (ascii, total) = text
        .chars()
        .filter(|c| c.is_alphabetic())
        .fold((0usize, 0usize), |(a, t), c| (a + c.is_ascii_alphabetic() as usize, t + 1));
    if total == 0 || (ascii as f64) < 0.9 * total as f64 {
        return false;
    }
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .any(|tok| FUNCTION_WORDS.contains(&tok.to_lowercase().as_str()))
}

/// Content hash of a record: FNV-1a over the cleaned issue text.
pub fn content_hash(record: &IssueRecord) -> u64 {
    fnv1a64(normalize_text(&record.text()).as_bytes())
}

/// Keeps the first record per content hash, preserving order.
pub fn deduplicate(records: Vec<IssueRecord>) -> Vec<IssueRecord> {
    let mut seen = HashSet::new();
    records
        .into_iter()
        .filter(|r| seen.insert(content_hash(r)))
        .collect()
}

/// Summary of a [`clean_records`] pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CleanStats {
    pub input: usize,
    pub too_short: usize,
    pub non_english: usize,
    pub duplicates: usize,
    pub kept: usize,
}

/// Full cleaning stage over issue records: clean title and body, drop short
/// and non-English issues, then deduplicate.
pub fn clean_records(records: Vec<IssueRecord>, min_len: usize) -> (Vec<IssueRecord>, CleanStats) {
    let mut stats = CleanStats {
        input: records.len(),
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(records.len());
    for mut record in records {
        let Some(text) = clean_text(&record.text(), min_len) else {
            stats.too_short += 1;
            continue;
        };
        if !is_english(&text) {
            stats.non_english += 1;
            continue;
        }
        record.title = normalize_text(&record.title);
        record.body = normalize_text(&record.body);
        kept.push(record);
    }
    let before = kept.len();
    let kept = deduplicate(kept);
    stats.duplicates = before - kept.len();
    stats.kept = kept.len();
    (kept, stats)
}

/// An issue paired with its quality annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedRecord {
    pub record: IssueRecord,
    pub qualities: QualitySet,
}

/// Annotates records with the qualities matched from their labels.
pub fn annotate(records: Vec<IssueRecord>) -> Vec<AnnotatedRecord> {
    records
        .into_iter()
        .map(|record| {
            let qualities = record.qualities();
            AnnotatedRecord { record, qualities }
        })
        .collect()
}

/// One binary training/evaluation instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub quality: QualityAttribute,
    pub label: u8,
    pub source_repo: String,
    pub source_id: String,
}

impl LabeledExample {
    pub fn is_positive(&self) -> bool {
        self.label == 1
    }

    fn validate(&self) -> Result<(), IngestError> {
        if self.label > 1 {
            return Err(IngestError::InvalidRecord(format!(
                "label must be 0 or 1, got {}",
                self.label
            )));
        }
        Ok(())
    }
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<LabeledExample>, IngestError> {
    read_jsonl(BufReader::new(reader), LabeledExample::validate)
}

pub fn write_dataset<W: Write>(mut writer: W, examples: &[LabeledExample]) -> io::Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut writer, ex)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

fn example_from(rec: &AnnotatedRecord, quality: QualityAttribute, label: u8) -> LabeledExample {
    LabeledExample {
        text: normalize_text(&rec.record.text()),
        quality,
        label,
        source_repo: rec.record.repo.clone(),
        source_id: rec.record.id.clone(),
    }
}

/// Builds a 1:1 balanced binary dataset for `quality`.
///
/// Negatives are drawn from issues carrying some other quality but not
/// `quality`. When that pool is smaller than the positives, the positives
/// are down-sampled instead.
pub fn build_binary_dataset(
    records: &[AnnotatedRecord],
    quality: QualityAttribute,
    seed: u64,
) -> Result<Vec<LabeledExample>, CorpusError> {
    let positives: Vec<&AnnotatedRecord> = records
        .iter()
        .filter(|r| r.qualities.contains(quality))
        .collect();
    if positives.is_empty() {
        return Err(CorpusError::EmptyDataset(quality));
    }
    let pool: Vec<&AnnotatedRecord> = records
        .iter()
        .filter(|r| !r.qualities.contains(quality) && !r.qualities.is_empty())
        .collect();
    if pool.is_empty() {
        return Err(CorpusError::NoNegatives(quality));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = positives.len().min(pool.len());
    let pick = |rng: &mut ChaCha8Rng, from: &[&AnnotatedRecord]| -> Vec<usize> {
        if from.len() == n {
            (0..n).collect()
        } else {
            let mut idx = index::sample(rng, from.len(), n).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    let pos_idx = pick(&mut rng, &positives);
    let neg_idx = pick(&mut rng, &pool);

    let mut out: Vec<LabeledExample> = pos_idx
        .iter()
        .map(|&i| example_from(positives[i], quality, 1))
        .chain(neg_idx.iter().map(|&i| example_from(pool[i], quality, 0)))
        .collect();
    out.shuffle(&mut rng);
    Ok(out)
}

/// Stratified k-fold over arbitrary class keys. Returns `k` sorted index
/// lists partitioning `0..classes.len()`.
pub fn stratified_kfold_by<K: Ord + Copy + Into<u64>>(
    classes: &[K],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, CorpusError> {
    if k < 2 {
        return Err(CorpusError::InvalidK(k));
    }
    let mut by_class: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, &c) in classes.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    for (&class, members) in &by_class {
        if members.len() < k {
            return Err(CorpusError::Stratification {
                k,
                class: class.into() as u8,
                count: members.len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for (j, &idx) in members.iter().enumerate() {
            folds[(offset + j) % k].push(idx);
        }
        offset = (offset + members.len()) % k;
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Stratified k-fold over binary examples, stratifying on the label.
pub fn stratified_kfold(
    examples: &[LabeledExample],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, CorpusError> {
    let labels: Vec<u8> = examples.iter().map(|e| e.label).collect();
    stratified_kfold_by(&labels, k, seed)
}

/// Stratified train/test holdout. Returns sorted (train, test) index lists.
pub fn stratified_holdout(
    examples: &[LabeledExample],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(test_fraction));
    }
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        by_class.entry(e.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        let n_test = (members.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Out-of-distribution split holding out one whole repository.
#[derive(Debug, Clone)]
pub struct LeaveOneOut {
    pub train: Vec<AnnotatedRecord>,
    pub held_out: Vec<AnnotatedRecord>,
    pub held_out_repo: String,
}

/// Picks the repo with the most positives for `quality` (lexicographically
/// smallest on ties).
pub fn held_out_repo(
    records: &[AnnotatedRecord],
    quality: QualityAttribute,
) -> Result<String, CorpusError> {
    top_repo(
        records
            .iter()
            .filter(|r| r.qualities.contains(quality))
            .map(|r| r.record.repo.as_str()),
        quality,
    )
}

/// [`held_out_repo`] over a binary dataset: the repo contributing the most
/// positive examples.
pub fn dataset_held_out_repo(examples: &[LabeledExample]) -> Result<String, CorpusError> {
    let quality = examples
        .first()
        .map(|e| e.quality)
        .ok_or(CorpusError::TooFewRepos {
            quality: QualityAttribute::Maintainability,
            repos: 0,
        })?;
    top_repo(
        examples
            .iter()
            .filter(|e| e.is_positive())
            .map(|e| e.source_repo.as_str()),
        quality,
    )
}

fn top_repo<'a>(
    positive_repos: impl Iterator<Item = &'a str>,
    quality: QualityAttribute,
) -> Result<String, CorpusError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for repo in positive_repos {
        *counts.entry(repo).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(CorpusError::TooFewRepos {
            quality,
            repos: counts.len(),
        });
    }
    // BTreeMap iterates lexicographically, so the first maximum wins.
    let mut best: Option<(&str, usize)> = None;
    for (repo, count) in counts {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((repo, count));
        }
    }
    Ok(best.map(|(r, _)| r.to_string()).unwrap_or_default())
}

pub fn leave_one_out_split(
    records: &[AnnotatedRecord],
    quality: QualityAttribute,
) -> Result<LeaveOneOut, CorpusError> {
    let repo = held_out_repo(records, quality)?;
    let (held_out, train) = records
        .iter()
        .cloned()
        .partition(|r| r.record.repo == repo);
    Ok(LeaveOneOut {
        train,
        held_out,
        held_out_repo: repo,
    })
}

/// Materialised train/test split of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    /// Index partitions of `train`.
    pub folds: Option<Vec<Vec<usize>>>,
    pub seed: u64,
}

/// On-disk form of a [`DatasetSplit`]: ids only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub k: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// Each fold lists indices into `train_ids`.
    pub folds: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held_out_repo: Option<String>,
}

impl DatasetSplit {
    pub fn manifest(&self, held_out_repo: Option<String>) -> SplitManifest {
        let folds = self.folds.clone().unwrap_or_default();
        SplitManifest {
            seed: self.seed,
            k: folds.len(),
            train_ids: self.train.iter().map(|e| e.source_id.clone()).collect(),
            test_ids: self.test.iter().map(|e| e.source_id.clone()).collect(),
            folds,
            held_out_repo,
        }
    }
}

impl SplitManifest {
    /// Re-materialises the split against a dataset, matching on source id.
    pub fn apply(&self, dataset: &[LabeledExample]) -> DatasetSplit {
        let by_id: BTreeMap<&str, &LabeledExample> =
            dataset.iter().map(|e| (e.source_id.as_str(), e)).collect();
        let pick = |ids: &[String]| -> Vec<LabeledExample> {
            ids.iter()
                .filter_map(|id| by_id.get(id.as_str()).map(|e| (*e).clone()))
                .collect()
        };
        DatasetSplit {
            train: pick(&self.train_ids),
            test: pick(&self.test_ids),
            folds: (!self.folds.is_empty()).then(|| self.folds.clone()),
            seed: self.seed,
        }
    }
}

/// Stratified holdout plus k folds over the training part.
pub fn holdout_split(
    examples: &[LabeledExample],
    test_fraction: f64,
    k: usize,
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    let (train_idx, test_idx) = stratified_holdout(examples, test_fraction, seed)?;
    let train: Vec<LabeledExample> = train_idx.iter().map(|&i| examples[i].clone()).collect();
    let test = test_idx.iter().map(|&i| examples[i].clone()).collect();
    let folds = stratified_kfold(&train, k, seed)?;
    Ok(DatasetSplit {
        train,
        test,
        folds: Some(folds),
        seed,
    })
}

/// Splits a dataset by repository: every example from `repo` is held out.
pub fn repo_split(
    examples: &[LabeledExample],
    repo: &str,
    k: usize,
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    let (test, train): (Vec<_>, Vec<_>) = examples
        .iter()
        .cloned()
        .partition(|e| e.source_repo == repo);
    let folds = stratified_kfold(&train, k, seed)?;
    Ok(DatasetSplit {
        train,
        test,
        folds: Some(folds),
        seed,
    })
}
