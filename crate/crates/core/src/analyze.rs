//! Corpus and repository analytics over tagged issues.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};

use crate::ingest::{open_maybe_gzip, read_jsonl, IngestError};
use crate::quality::{QualityAttribute, QualitySet, QUALITY_COUNT};
use crate::table::TextTable;

pub const UNKNOWN_LANGUAGE: &str = "unknown";

#[derive(Debug, thiserror::Error)]
pub enum AnalyzeError {
    #[error("total issue count must be positive")]
    ZeroTotal,
    #[error("total issue count {total} is smaller than the {tagged} tagged issues")]
    TotalTooSmall { total: u64, tagged: u64 },
    #[error("every quality count is zero")]
    AllCountsZero,
    #[error(transparent)]
    Io(#[from] IngestError),
}

/// One classified issue as consumed by the analytics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedIssue {
    pub issue_id: String,
    pub repo: String,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo_language: Option<String>,
    pub predicted: QualitySet,
}

/// Reads tagged-issue JSONL (plain or gzip). Extra fields are ignored.
pub fn read_tagged<R: Read>(reader: R) -> Result<Vec<TaggedIssue>, IngestError> {
    read_jsonl(open_maybe_gzip(reader)?, |_: &TaggedIssue| Ok(()))
}

fn quality_counts(tagged: &[TaggedIssue]) -> [u64; QUALITY_COUNT] {
    let mut counts = [0u64; QUALITY_COUNT];
    for issue in tagged {
        for q in issue.predicted.iter() {
            counts[q.index()] += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub quality: QualityAttribute,
    pub count: u64,
    /// Percentage of all scanned issues.
    pub relative_frequency: f64,
}

/// `100 · count / total`.
pub fn relative_frequency(count: u64, total: u64) -> Result<f64, AnalyzeError> {
    if total == 0 {
        return Err(AnalyzeError::ZeroTotal);
    }
    Ok(100.0 * count as f64 / total as f64)
}

/// Per-quality counts over `tagged`, relative to `total_issues` scanned.
pub fn quality_frequency(tagged: &[TaggedIssue], total_issues: u64) -> Result<Vec<FrequencyRow>, AnalyzeError> {
    if total_issues == 0 {
        return Err(AnalyzeError::ZeroTotal);
    }
    if (tagged.len() as u64) > total_issues {
        return Err(AnalyzeError::TotalTooSmall {
            total: total_issues,
            tagged: tagged.len() as u64,
        });
    }
    let counts = quality_counts(tagged);
    QualityAttribute::ALL
        .into_iter()
        .map(|q| {
            Ok(FrequencyRow {
                quality: q,
                count: counts[q.index()],
                relative_frequency: relative_frequency(counts[q.index()], total_issues)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecificityEntry {
    pub a: QualityAttribute,
    pub b: QualityAttribute,
    /// Issues tagged with both.
    pub both: u64,
    /// Issues tagged with either.
    pub either: u64,
    pub score: f64,
}

/// Jaccard co-occurrence for each of the 21 unordered quality pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecificityMatrix {
    pub entries: Vec<SpecificityEntry>,
}

impl SpecificityMatrix {
    /// Score for an unordered pair; `None` on the diagonal.
    pub fn score(&self, a: QualityAttribute, b: QualityAttribute) -> Option<f64> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.entries
            .iter()
            .find(|e| e.a == a && e.b == b)
            .map(|e| e.score)
    }
}

pub fn specificity_scores(tagged: &[TaggedIssue]) -> SpecificityMatrix {
    let mut entries = Vec::with_capacity(21);
    for (i, &a) in QualityAttribute::ALL.iter().enumerate() {
        for &b in &QualityAttribute::ALL[i + 1..] {
            let (mut both, mut either) = (0u64, 0u64);
            for issue in tagged {
                let (ha, hb) = (issue.predicted.contains(a), issue.predicted.contains(b));
                both += (ha && hb) as u64;
                either += (ha || hb) as u64;
            }
            let score = if either == 0 { 0.0 } else { both as f64 / either as f64 };
            entries.push(SpecificityEntry {
                a,
                b,
                both,
                either,
                score,
            });
        }
    }
    SpecificityMatrix { entries }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Peak {
    pub period: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakRow {
    pub quality: QualityAttribute,
    pub monthly: Peak,
    pub quarterly: Peak,
    pub yearly: Peak,
}

fn peak<K: Ord>(buckets: &BTreeMap<K, u64>, label: impl Fn(&K) -> String) -> Peak {
    let mut best: Option<(&K, u64)> = None;
    for (k, &count) in buckets {
        // strict comparison keeps the earliest period on ties
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((k, count));
        }
    }
    let (k, count) = best.expect("peak over a non-empty bucket map");
    Peak {
        period: label(k),
        count,
    }
}

/// Busiest calendar month, quarter and year (UTC) for each quality that
/// has at least one issue.
pub fn temporal_peaks(tagged: &[TaggedIssue]) -> Vec<PeakRow> {
    let mut months: [BTreeMap<(i32, u32), u64>; QUALITY_COUNT] = Default::default();
    let mut quarters: [BTreeMap<(i32, u32), u64>; QUALITY_COUNT] = Default::default();
    let mut years: [BTreeMap<i32, u64>; QUALITY_COUNT] = Default::default();
    for issue in tagged {
        let (y, m) = (issue.created_at.year(), issue.created_at.month());
        for q in issue.predicted.iter() {
            let i = q.index();
            *months[i].entry((y, m)).or_default() += 1;
            *quarters[i].entry((y, (m - 1) / 3 + 1)).or_default() += 1;
            *years[i].entry(y).or_default() += 1;
        }
    }
    QualityAttribute::ALL
        .into_iter()
        .filter(|q| !years[q.index()].is_empty())
        .map(|q| {
            let i = q.index();
            PeakRow {
                quality: q,
                monthly: peak(&months[i], |(y, m)| format!("{y:04}-{m:02}")),
                quarterly: peak(&quarters[i], |(y, qn)| format!("{y:04}-Q{qn}")),
                yearly: peak(&years[i], |y| format!("{y:04}")),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    pub quality: QualityAttribute,
    pub count: u64,
    /// Share of the summed per-quality counts.
    pub percentage: f64,
}

/// Shares of the summed per-quality counts, in canonical order.
pub fn td_impact_from_counts(counts: &[(QualityAttribute, u64)]) -> Result<Vec<ImpactRow>, AnalyzeError> {
    let sum: u64 = counts.iter().map(|(_, c)| c).sum();
    if sum == 0 {
        return Err(AnalyzeError::AllCountsZero);
    }
    Ok(counts
        .iter()
        .map(|&(quality, count)| ImpactRow {
            quality,
            count,
            percentage: 100.0 * count as f64 / sum as f64,
        })
        .collect())
}

pub fn td_impact(tagged: &[TaggedIssue]) -> Result<Vec<ImpactRow>, AnalyzeError> {
    let counts = quality_counts(tagged);
    let pairs: Vec<_> = QualityAttribute::ALL
        .into_iter()
        .map(|q| (q, counts[q.index()]))
        .collect();
    td_impact_from_counts(&pairs)
}

/// Language → quality → issue count. Issues without a language fall under
/// [`UNKNOWN_LANGUAGE`].
pub type LanguageBreakdown = BTreeMap<String, BTreeMap<QualityAttribute, u64>>;

pub fn language_breakdown(tagged: &[TaggedIssue]) -> LanguageBreakdown {
    let mut table = LanguageBreakdown::new();
    for issue in tagged {
        let lang = issue.repo_language.as_deref().unwrap_or(UNKNOWN_LANGUAGE);
        let row = table.entry(lang.to_string()).or_insert_with(|| {
            QualityAttribute::ALL.into_iter().map(|q| (q, 0)).collect()
        });
        for q in issue.predicted.iter() {
            *row.get_mut(&q).expect("row holds every quality") += 1;
        }
    }
    table
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoSummary {
    pub total_issues: u64,
    pub frequency: Vec<FrequencyRow>,
}

/// All analytics for one tagged corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub total_issues: u64,
    pub frequency: Vec<FrequencyRow>,
    pub repos: BTreeMap<String, RepoSummary>,
    pub specificity: SpecificityMatrix,
    pub peaks: Vec<PeakRow>,
    /// Absent when no issue carries any quality.
    pub td_impact: Option<Vec<ImpactRow>>,
    pub languages: LanguageBreakdown,
}

/// Runs every analysis. Each issue in `tagged` counts as scanned, so the
/// frequency denominators are the issue counts overall and per repository.
pub fn analyze(tagged: &[TaggedIssue]) -> Result<AnalysisReport, AnalyzeError> {
    let total = tagged.len() as u64;
    let mut by_repo: BTreeMap<&str, Vec<TaggedIssue>> = BTreeMap::new();
    for issue in tagged {
        by_repo.entry(&issue.repo).or_default().push(issue.clone());
    }
    let repos = by_repo
        .into_iter()
        .map(|(repo, issues)| {
            let n = issues.len() as u64;
            Ok((
                repo.to_string(),
                RepoSummary {
                    total_issues: n,
                    frequency: quality_frequency(&issues, n)?,
                },
            ))
        })
        .collect::<Result<_, AnalyzeError>>()?;
    let td_impact = match td_impact(tagged) {
        Ok(rows) => Some(rows),
        Err(AnalyzeError::AllCountsZero) => None,
        Err(e) => return Err(e),
    };
    Ok(AnalysisReport {
        total_issues: total,
        frequency: quality_frequency(tagged, total)?,
        repos,
        specificity: specificity_scores(tagged),
        peaks: temporal_peaks(tagged),
        td_impact,
        languages: language_breakdown(tagged),
    })
}

impl AnalysisReport {
    /// Named tables for text and CSV output.
    pub fn tables(&self) -> Vec<(&'static str, TextTable)> {
        let mut freq = TextTable::new(["Repository", "Quality", "Count", "Relative Frequency (%)"]);
        for (repo, summary) in &self.repos {
            for row in &summary.frequency {
                freq.row([
                    repo.clone(),
                    row.quality.title().to_string(),
                    row.count.to_string(),
                    format!("{:.4}", row.relative_frequency),
                ]);
            }
        }
        for row in &self.frequency {
            freq.row([
                "(all)".to_string(),
                row.quality.title().to_string(),
                row.count.to_string(),
                format!("{:.4}", row.relative_frequency),
            ]);
        }

        let mut spec = TextTable::new(["Label Pair", "Both", "Either", "Specificity Score"]);
        for e in &self.specificity.entries {
            spec.row([
                format!("{} - {}", e.a.title(), e.b.title()),
                e.both.to_string(),
                e.either.to_string(),
                format!("{:.4}", e.score),
            ]);
        }

        let mut peaks = TextTable::new([
            "Quality", "Peak Month", "Count", "Peak Quarter", "Count", "Peak Year", "Count",
        ]);
        for p in &self.peaks {
            peaks.row([
                p.quality.title().to_string(),
                p.monthly.period.clone(),
                p.monthly.count.to_string(),
                p.quarterly.period.clone(),
                p.quarterly.count.to_string(),
                p.yearly.period.clone(),
                p.yearly.count.to_string(),
            ]);
        }

        let mut impact = TextTable::new(["Quality", "Count", "Percentage (%)"]);
        for row in self.td_impact.iter().flatten() {
            impact.row([
                row.quality.title().to_string(),
                row.count.to_string(),
                format!("{:.2}", row.percentage),
            ]);
        }

        let mut langs = TextTable::new(
            std::iter::once("Language".to_string())
                .chain(QualityAttribute::ALL.iter().map(|q| q.title().to_string())),
        );
        for (lang, row) in &self.languages {
            langs.row(std::iter::once(lang.clone()).chain(row.values().map(u64::to_string)));
        }

        vec![
            ("frequency", freq),
            ("specificity", spec),
            ("peaks", peaks),
            ("td_impact", impact),
            ("languages", langs),
        ]
    }
}
