//! Issue ingestion: event-archive parsing, label-to-quality matching and the
//! scrub/force rule engine.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read, Write};

use chrono::{DateTime, Utc};
use flate2::read::MultiGzDecoder;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::quality::{QualityAttribute, QualitySet};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("invalid issue record: {0}")]
    InvalidRecord(String),
    #[error("invalid rule: {0}")]
    InvalidRule(String),
}

/// One mined issue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub id: String,
    pub repo: String,
    pub title: String,
    pub body: String,
    pub labels: Vec<String>,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo_language: Option<String>,
}

impl IssueRecord {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.id.is_empty() {
            return Err(IngestError::InvalidRecord("empty id".into()));
        }
        if self.repo.matches('/').count() != 1 {
            return Err(IngestError::InvalidRecord(format!(
                "repo '{}' is not of the form owner/name",
                self.repo
            )));
        }
        Ok(())
    }

    /// Issue text as classified downstream: title, newline, body.
    pub fn text(&self) -> String {
        format!("{}\n{}", self.title, self.body)
    }

    pub fn qualities(&self) -> QualitySet {
        match_quality_labels(&self.labels)
    }
}

const QUALITY_STEMS: [(&str, QualityAttribute); 8] = [
    ("maintain", QualityAttribute::Maintainability),
    ("securit", QualityAttribute::Security),
    ("reliab", QualityAttribute::Reliability),
    ("usab", QualityAttribute::Usability),
    ("compatib", QualityAttribute::Compatibility),
    ("scal", QualityAttribute::Performance),
    ("perform", QualityAttribute::Performance),
    ("portab", QualityAttribute::Portability),
];

/// Stems recognised by [`match_quality_labels`], paired with their quality.
pub fn quality_stems() -> &'static [(&'static str, QualityAttribute)] {
    &QUALITY_STEMS
}

/// Maps raw labels to qualities by unanchored, case-insensitive stem match.
pub fn match_quality_labels<S: AsRef<str>>(labels: &[S]) -> QualitySet {
    let mut set = QualitySet::EMPTY;
    for label in labels {
        let lower = label.as_ref().to_lowercase();
        for (stem, quality) in QUALITY_STEMS {
            if lower.contains(stem) {
                set.insert(quality);
            }
        }
    }
    set
}

/// Result of parsing an event archive.
#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    /// One record per distinct issue, ordered by (repo, id).
    pub records: Vec<IssueRecord>,
    /// Issue-bearing events seen before deduplication.
    pub issue_events: usize,
    /// Lines that were not valid JSON or lacked required issue fields.
    pub skipped: usize,
    /// Non-empty lines read.
    pub lines: usize,
}

const ACCEPTED_ACTIONS: [&str; 4] = ["opened", "labeled", "edited", "reopened"];

/// Wraps a reader so gzip input (detected by magic bytes) is transparently
/// decompressed.
pub fn open_maybe_gzip<'a, R: Read + 'a>(reader: R) -> io::Result<Box<dyn BufRead + 'a>> {
    let mut buffered = BufReader::new(reader);
    let head = buffered.fill_buf()?;
    if head.len() >= 2 && head[0] == 0x1f && head[1] == 0x8b {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(buffered))))
    } else {
        Ok(Box::new(buffered))
    }
}

/// Parses a newline-delimited JSON event archive (plain or gzip).
///
/// Accepts `IssuesEvent` lines with action opened, labeled, edited or
/// reopened. The last event per issue id wins.
pub fn parse_event_stream<R: Read>(stream: R) -> Result<ParseOutcome, IngestError> {
    let reader = open_maybe_gzip(stream)?;
    let mut latest: BTreeMap<(String, String), IssueRecord> = BTreeMap::new();
    let mut outcome = ParseOutcome::default();

    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        outcome.lines += 1;
        let value: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(_) => {
                outcome.skipped += 1;
                continue;
            }
        };
        match event_to_record(&value) {
            EventKind::Issue(record) => {
                outcome.issue_events += 1;
                latest.insert((record.repo.clone(), record.id.clone()), record);
            }
            EventKind::Ignored => {}
            EventKind::Broken => outcome.skipped += 1,
        }
    }

    outcome.records = latest.into_values().collect();
    if outcome.records.is_empty() {
        log::warn!(
            "event stream yielded no issue records ({} lines, {} skipped)",
            outcome.lines,
            outcome.skipped
        );
    }
    Ok(outcome)
}

enum EventKind {
    Issue(IssueRecord),
    Ignored,
    Broken,
}

fn event_to_record(event: &Value) -> EventKind {
    if event.get("type").and_then(Value::as_str) != Some("IssuesEvent") {
        return EventKind::Ignored;
    }
    let payload = match event.get("payload") {
        Some(p) => p,
        None => return EventKind::Broken,
    };
    match payload.get("action").and_then(Value::as_str) {
        Some(action) if ACCEPTED_ACTIONS.contains(&action) => {}
        Some(_) => return EventKind::Ignored,
        None => return EventKind::Broken,
    }
    let (Some(issue), Some(repo)) = (
        payload.get("issue"),
        event.pointer("/repo/name").and_then(Value::as_str),
    ) else {
        return EventKind::Broken;
    };

    let id = match issue.get("id") {
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        _ => match issue.get("number").and_then(Value::as_u64) {
            Some(n) => format!("{repo}#{n}"),
            None => return EventKind::Broken,
        },
    };
    let created_at = issue
        .get("created_at")
        .or_else(|| event.get("created_at"))
        .and_then(Value::as_str)
        .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
        .map(|t| t.with_timezone(&Utc));
    let Some(created_at) = created_at else {
        return EventKind::Broken;
    };
    let labels = issue
        .get("labels")
        .and_then(Value::as_array)
        .map(|arr| {
            arr.iter()
                .filter_map(|l| match l {
                    Value::String(s) => Some(s.clone()),
                    other => other.get("name").and_then(Value::as_str).map(String::from),
                })
                .collect()
        })
        .unwrap_or_default();
    let repo_language = event
        .pointer("/repo/language")
        .and_then(Value::as_str)
        .map(String::from);

    let record = IssueRecord {
        id,
        repo: repo.to_string(),
        title: issue
            .get("title")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string(),
        body: issue
            .get("body")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string(),
        labels,
        created_at,
        repo_language,
    };
    match record.validate() {
        Ok(()) => EventKind::Issue(record),
        Err(_) => EventKind::Broken,
    }
}

/// Reads a JSONL file of [`IssueRecord`]s. Every line must be valid.
pub fn read_issues<R: Read>(reader: R) -> Result<Vec<IssueRecord>, IngestError> {
    read_jsonl(open_maybe_gzip(reader)?, |rec: &IssueRecord| rec.validate())
}

pub fn write_issues<W: Write>(mut writer: W, records: &[IssueRecord]) -> io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub(crate) fn read_jsonl<T, R, F>(reader: R, validate: F) -> Result<Vec<T>, IngestError>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
    F: Fn(&T) -> Result<(), IngestError>,
{
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        validate(&item).map_err(|e| IngestError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    ScrubPhrase,
    ForceTag,
}

/// A scrub or force-tag rule as stored in a rules file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRule {
    pub kind: RuleKind,
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<QualityAttribute>,
}

impl LabelRule {
    pub fn scrub(pattern: impl Into<String>) -> Self {
        LabelRule {
            kind: RuleKind::ScrubPhrase,
            pattern: pattern.into(),
            target: None,
        }
    }

    pub fn force(pattern: impl Into<String>, target: QualityAttribute) -> Self {
        LabelRule {
            kind: RuleKind::ForceTag,
            pattern: pattern.into(),
            target: Some(target),
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.pattern.is_empty() {
            return Err(IngestError::InvalidRule("empty pattern".into()));
        }
        match (self.kind, self.target) {
            (RuleKind::ForceTag, None) => Err(IngestError::InvalidRule(format!(
                "force-tag rule '{}' has no target",
                self.pattern
            ))),
            (RuleKind::ScrubPhrase, Some(_)) => Err(IngestError::InvalidRule(format!(
                "scrub-phrase rule '{}' must not carry a target",
                self.pattern
            ))),
            _ => Ok(()),
        }
    }
}

pub fn read_rules<R: Read>(reader: R) -> Result<Vec<LabelRule>, IngestError> {
    read_jsonl(BufReader::new(reader), LabelRule::validate)
}

/// Rules compiled to case-insensitive matchers.
#[derive(Debug, Clone)]
pub struct RuleSet {
    scrub: Vec<Regex>,
    force: Vec<(Regex, QualityAttribute)>,
}

impl RuleSet {
    pub fn new(rules: &[LabelRule]) -> Result<Self, IngestError> {
        let mut scrub = Vec::new();
        let mut force = Vec::new();
        for rule in rules {
            rule.validate()?;
            let re = Regex::new(&format!("(?i){}", regex::escape(&rule.pattern)))
                .map_err(|e| IngestError::InvalidRule(e.to_string()))?;
            match (rule.kind, rule.target) {
                (RuleKind::ScrubPhrase, _) => scrub.push(re),
                (RuleKind::ForceTag, Some(target)) => force.push((re, target)),
                (RuleKind::ForceTag, None) => unreachable!("validated above"),
            }
        }
        Ok(RuleSet { scrub, force })
    }

    pub fn is_empty(&self) -> bool {
        self.scrub.is_empty() && self.force.is_empty()
    }

    /// Scrubs the record's text and collects forced qualities. Force rules
    /// look at the original, unscrubbed text.
    pub fn apply(&self, record: &IssueRecord) -> (IssueRecord, QualitySet) {
        let forced = self
            .force
            .iter()
            .filter(|(re, _)| re.is_match(&record.title) || re.is_match(&record.body))
            .map(|(_, q)| *q)
            .collect();
        let mut rewritten = record.clone();
        rewritten.title = self.scrub_field(&record.title);
        rewritten.body = self.scrub_field(&record.body);
        (rewritten, forced)
    }

    fn scrub_field(&self, field: &str) -> String {
        let mut text = field.to_string();
        let mut removed = false;
        for re in &self.scrub {
            if re.is_match(&text) {
                text = re.replace_all(&text, "").into_owned();
                removed = true;
            }
        }
        if removed {
            text.split_whitespace().collect::<Vec<_>>().join(" ")
        } else {
            text
        }
    }
}

/// Convenience wrapper compiling `rules` on every call.
pub fn apply_rules(
    record: &IssueRecord,
    rules: &[LabelRule],
) -> Result<(IssueRecord, QualitySet), IngestError> {
    Ok(RuleSet::new(rules)?.apply(record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use QualityAttribute::*;

    fn record(title: &str, body: &str) -> IssueRecord {
        IssueRecord {
            id: "1".into(),
            repo: "acme/app".into(),
            title: title.into(),
            body: body.into(),
            labels: vec!["bug".into()],
            created_at: "2021-03-04T05:06:07Z".parse().unwrap(),
            repo_language: Some("Rust".into()),
        }
    }

    fn set(qs: &[QualityAttribute]) -> QualitySet {
        qs.iter().copied().collect()
    }

    #[test]
    fn labels_map_to_qualities() {
        assert_eq!(match_quality_labels(&["security-vulnerability"]), set(&[Security]));
        assert_eq!(match_quality_labels(&["bug", "help wanted"]), QualitySet::EMPTY);
        assert_eq!(
            match_quality_labels(&["Usability", "performance-regression", "scalability"]),
            set(&[Usability, Performance])
        );
        assert_eq!(match_quality_labels::<&str>(&[]), QualitySet::EMPTY);
        assert_eq!(match_quality_labels(&["high-performance"]), set(&[Performance]));
    }

    #[test]
    fn single_event_line() {
        let line = r#"{"type":"IssuesEvent","repo":{"name":"acme/app"},"payload":{"action":"opened","issue":{"id":17,"number":3,"title":"crash on save","body":"it crashes","labels":[{"name":"bug"}],"created_at":"2020-01-01T00:00:00Z"}}}"#;
        let out = parse_event_stream(line.as_bytes()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].labels, vec!["bug"]);
        assert_eq!(out.records[0].title, "crash on save");
        assert_eq!(out.records[0].id, "17");
        assert_eq!(out.skipped, 0);
    }

    #[test]
    fn truncated_line_is_skipped() {
        let ok = |id: u32| {
            format!(
                r#"{{"type":"IssuesEvent","repo":{{"name":"a/b"}},"payload":{{"action":"opened","issue":{{"id":{id},"title":"t","body":"b","labels":[],"created_at":"2020-01-01T00:00:00Z"}}}}}}"#
            )
        };
        let stream = format!("{}\n{{\"type\":\"IssuesEv\n{}\n", ok(1), ok(2));
        let out = parse_event_stream(stream.as_bytes()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.skipped, 1);
    }

    #[test]
    fn later_event_wins() {
        let ev = |action: &str, labels: &str| {
            format!(
                r#"{{"type":"IssuesEvent","repo":{{"name":"a/b"}},"payload":{{"action":"{action}","issue":{{"id":5,"title":"t","body":"b","labels":{labels},"created_at":"2020-01-01T00:00:00Z"}}}}}}"#
            )
        };
        let stream = [
            ev("opened", "[]"),
            ev("closed", r#"[{"name":"wontfix"}]"#),
            ev("labeled", r#"[{"name":"security"}]"#),
        ]
        .join("\n");
        let out = parse_event_stream(stream.as_bytes()).unwrap();
        assert_eq!(out.issue_events, 2);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].labels, vec!["security"]);
    }

    #[test]
    fn empty_stream_is_not_an_error() {
        let out = parse_event_stream(&b""[..]).unwrap();
        assert!(out.records.is_empty());
    }

    #[test]
    fn gzip_is_detected() {
        use flate2::{write::GzEncoder, Compression};
        let line = r#"{"type":"IssuesEvent","repo":{"name":"a/b"},"payload":{"action":"opened","issue":{"id":1,"title":"x","body":"","labels":[],"created_at":"2020-01-01T00:00:00Z"}}}"#;
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(line.as_bytes()).unwrap();
        let gz = enc.finish().unwrap();
        let out = parse_event_stream(&gz[..]).unwrap();
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn scrub_and_force() {
        let rules = [LabelRule::scrub("Snyk"), LabelRule::force("Snyk", Security)];
        let (rewritten, forced) = apply_rules(&record("t", "Snyk found CVE-2023-1"), &rules).unwrap();
        assert_eq!(rewritten.body, "found CVE-2023-1");
        assert_eq!(forced, set(&[Security]));
    }

    #[test]
    fn empty_rules_are_identity() {
        let rec = record("Title  with  spaces", "body\n\ntext");
        let (rewritten, forced) = apply_rules(&rec, &[]).unwrap();
        assert_eq!(rewritten, rec);
        assert!(forced.is_empty());
    }

    #[test]
    fn scrub_is_case_insensitive() {
        let (rewritten, _) =
            apply_rules(&record("t", "aikido AIKIDO aikido"), &[LabelRule::scrub("aikido")]).unwrap();
        assert_eq!(rewritten.body, "");
    }

    #[test]
    fn force_uses_original_text() {
        // the scrub runs first in rule order but force still sees the original
        let rules = [LabelRule::scrub("coverity"), LabelRule::force("Coverity", Security)];
        let (rewritten, forced) = apply_rules(&record("Coverity report", ""), &rules).unwrap();
        assert_eq!(rewritten.title, "report");
        assert!(forced.contains(Security));
    }

    #[test]
    fn invalid_rules_rejected() {
        assert!(LabelRule::scrub("").validate().is_err());
        let bad = LabelRule {
            kind: RuleKind::ForceTag,
            pattern: "x".into(),
            target: None,
        };
        assert!(bad.validate().is_err());
        let rules = read_rules(
            &br#"{"kind":"scrub-phrase","pattern":"Snyk"}
{"kind":"force-tag","pattern":"Snyk","target":"security"}"#[..],
        )
        .unwrap();
        assert_eq!(rules[1], LabelRule::force("Snyk", Security));
    }

    #[test]
    fn record_validation() {
        let mut rec = record("t", "b");
        assert!(rec.validate().is_ok());
        rec.repo = "a/b/c".into();
        assert!(rec.validate().is_err());
        rec.repo = "a/b".into();
        rec.id.clear();
        assert!(rec.validate().is_err());
    }

    proptest! {
        #[test]
        fn stem_with_any_suffix_matches(idx in 0usize..8, suffix in "[a-zA-Z0-9 _-]{0,12}", prefix in "[a-z-]{0,5}") {
            let (stem, quality) = QUALITY_STEMS[idx];
            let label = format!("{prefix}{stem}{suffix}");
            prop_assert!(match_quality_labels(&[label]).contains(quality));
        }

        #[test]
        fn matching_is_order_insensitive_and_idempotent(labels in proptest::collection::vec("[a-zA-Z -]{0,16}", 0..6)) {
            let forward = match_quality_labels(&labels);
            let mut rev = labels.clone();
            rev.reverse();
            prop_assert_eq!(forward, match_quality_labels(&rev));
            let mut doubled = labels.clone();
            doubled.extend(labels.iter().cloned());
            prop_assert_eq!(forward, match_quality_labels(&doubled));
        }

        #[test]
        fn scrub_keeps_identity_fields(body in "[a-zA-Z ]{0,40}", pat in "[a-z]{1,4}") {
            let rec = record("title", &body);
            let (rewritten, forced) = apply_rules(&rec, &[LabelRule::scrub(pat)]).unwrap();
            prop_assert!(forced.is_empty());
            prop_assert_eq!(&rewritten.id, &rec.id);
            prop_assert_eq!(&rewritten.repo, &rec.repo);
            prop_assert_eq!(&rewritten.labels, &rec.labels);
            prop_assert_eq!(rewritten.created_at, rec.created_at);
        }

        #[test]
        fn issue_jsonl_round_trips(title in ".{0,30}", body in ".{0,60}", secs in 0i64..4_000_000_000i64, nanos in 0u32..1_000_000_000u32, lang in proptest::option::of("[A-Za-z+#]{1,8}")) {
            let rec = IssueRecord {
                id: "x-1".into(),
                repo: "o/n".into(),
                title,
                body,
                labels: vec!["perf".into(), "ü".into()],
                created_at: DateTime::from_timestamp(secs, nanos).unwrap(),
                repo_language: lang,
            };
            let mut buf = Vec::new();
            write_issues(&mut buf, std::slice::from_ref(&rec)).unwrap();
            let back = read_issues(&buf[..]).unwrap();
            prop_assert_eq!(back, vec![rec]);
        }
    }
}
