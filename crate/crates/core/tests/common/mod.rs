#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::OnceLock;

use chrono::{DateTime, Duration, Utc};
use qualitagger::ingest::IssueRecord;
use qualitagger::{QualityAttribute, QualitySet};
use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// Tokens planted into documents of each quality; no token is shared.
pub const KEYWORDS: [(QualityAttribute, [&str; 6]); 7] = [
    (QualityAttribute::Maintainability, ["refactor", "cleanup", "deprecated", "readability", "duplication", "modularize"]),
    (QualityAttribute::Security, ["vulnerability", "exploit", "xss", "injection", "csrf", "credentials"]),
    (QualityAttribute::Reliability, ["crash", "segfault", "flaky", "outage", "deadlock", "corruption"]),
    (QualityAttribute::Usability, ["confusing", "tooltip", "accessibility", "onboarding", "discoverability", "wording"]),
    (QualityAttribute::Compatibility, ["safari", "firefox", "interoperability", "polyfill", "legacy", "downgrade"]),
    (QualityAttribute::Performance, ["slow", "latency", "throughput", "benchmark", "cpu", "sluggish"]),
    (QualityAttribute::Portability, ["windows", "arm64", "macos", "crossplatform", "alpine", "freebsd"]),
];

const FILLER: [&str; 40] = [
    "the", "when", "we", "this", "is", "of", "to", "and", "in", "it", "that", "for", "on", "with", "after",
    "page", "user", "file", "config", "server", "request", "update", "feature", "module", "release", "option",
    "project", "change", "value", "list", "report", "setting", "field", "screen", "command", "service",
    "handler", "output", "input", "data",
];

const SYLLABLES: [&str; 8] = ["ka", "lo", "mi", "nu", "re", "si", "to", "ve"];

/// Filler words plus generated pseudo-words, so that filler bigrams rarely
/// recur across documents.
fn filler_vocab() -> &'static [String] {
    static VOCAB: OnceLock<Vec<String>> = OnceLock::new();
    VOCAB.get_or_init(|| {
        let mut words: Vec<String> = FILLER.iter().map(|w| w.to_string()).collect();
        for a in SYLLABLES {
            for b in SYLLABLES {
                for c in SYLLABLES {
                    words.push(format!("{a}{b}{c}"));
                }
            }
        }
        words
    })
}

const LANGUAGES: [&str; 4] = ["Go", "Rust", "Python", "TypeScript"];

pub fn keywords(q: QualityAttribute) -> &'static [&'static str; 6] {
    &KEYWORDS[q.index()].1
}

fn planted_text(rng: &mut ChaCha8Rng, qualities: QualitySet, words: usize) -> String {
    let mut tokens: Vec<&str> = (0..words).map(|_| filler_vocab().choose(rng).unwrap().as_str()).collect();
    for q in qualities.iter() {
        for _ in 0..2 {
            let kw = *keywords(q).choose(rng).unwrap();
            let at = rng.random_range(0..=tokens.len());
            tokens.insert(at, kw);
        }
    }
    tokens.join(" ")
}

/// One issue per index with a planted primary quality (`i % 7`) and, with
/// probability 0.15, a second one. Labels name the qualities.
pub fn planted_corpus(n: usize, seed: u64) -> Vec<IssueRecord> {
    planted_corpus_with(n, seed, 0.15, 14)
}

/// As `planted_corpus`, with `second_rate` the chance of a second quality
/// and `filler` the number of filler words per body.
pub fn planted_corpus_with(n: usize, seed: u64, second_rate: f64, filler: usize) -> Vec<IssueRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start: DateTime<Utc> = "2019-01-01T00:00:00Z".parse().unwrap();
    (0..n)
        .map(|i| {
            let mut qs = QualitySet::new();
            qs.insert(QualityAttribute::ALL[i % 7]);
            if rng.random_bool(second_rate) {
                qs.insert(QualityAttribute::ALL[rng.random_range(0..7)]);
            }
            let title = planted_text(&mut rng, QualitySet::EMPTY, filler.min(4));
            let body = format!("the {}", planted_text(&mut rng, qs, filler));
            let labels = qs.iter().map(|q| format!("kind/{}", q.name())).collect();
            IssueRecord {
                id: format!("{}", 1000 + i),
                repo: format!("acme/repo{}", i % 5),
                title: format!("{title} {}", keywords(qs.first().unwrap())[i % 6]),
                body,
                labels,
                created_at: start + Duration::hours(rng.random_range(0..40_000)),
                repo_language: Some(LANGUAGES[i % 5 % 4].to_string()),
            }
        })
        .collect()
}

/// A synthetic event archive with known ground truth.
pub struct Archive {
    pub text: String,
    pub lines: usize,
    /// Accepted issue events (opened/labeled/edited/reopened).
    pub issue_events: usize,
    pub distinct_issues: usize,
    /// Lines that are malformed or lack required fields.
    pub broken: usize,
}

fn issue_event(rng: &mut ChaCha8Rng, repo: &str, id: u64, action: &str) -> serde_json::Value {
    let labels = if rng.random_bool(0.5) {
        let (q, _) = KEYWORDS[rng.random_range(0..7)];
        vec![json!({"name": format!("type: {}", q.name())})]
    } else {
        vec![json!({"name": "bug"})]
    };
    json!({
        "type": "IssuesEvent",
        "created_at": "2021-05-01T10:00:00Z",
        "repo": {"name": repo, "language": "Go"},
        "payload": {
            "action": action,
            "issue": {
                "id": id,
                "number": id % 1000,
                "title": format!("issue {id} crash on save"),
                "body": "the editor stops when we save a large file",
                "labels": labels,
                "created_at": "2021-04-30T08:00:00Z"
            }
        }
    })
}

/// `lines` archive lines of which exactly `issue_events` are accepted issue
/// events; the rest are other event types, ignored actions and broken lines.
pub fn event_archive(lines: usize, issue_events: usize, seed: u64) -> Archive {
    assert!(issue_events <= lines);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let issue_at: BTreeSet<usize> = index::sample(&mut rng, lines, issue_events).into_iter().collect();
    let actions = ["opened", "labeled", "edited", "reopened"];
    let id_space = (issue_events as u64 * 2 / 3).max(1);
    let mut seen = BTreeSet::new();
    let mut broken = 0;
    let mut text = String::new();
    for i in 0..lines {
        let repo = format!("org{}/proj{}", i % 3, i % 7);
        let line = if issue_at.contains(&i) {
            let id = rng.random_range(0..id_space);
            seen.insert((repo.clone(), id));
            let action = *actions.choose(&mut rng).unwrap();
            issue_event(&mut rng, &repo, id, action).to_string()
        } else {
            match i % 5 {
                0 => json!({"type": "PushEvent", "repo": {"name": repo}, "payload": {}}).to_string(),
                1 => json!({"type": "WatchEvent", "repo": {"name": repo}}).to_string(),
                2 => issue_event(&mut rng, &repo, 1, "closed").to_string(),
                3 => {
                    broken += 1;
                    let full = issue_event(&mut rng, &repo, 2, "opened").to_string();
                    full[..full.len() / 2].to_string()
                }
                _ => {
                    broken += 1;
                    json!({"type": "IssuesEvent", "payload": {"action": "opened", "issue": {"id": 5}}}).to_string()
                }
            }
        };
        text.push_str(&line);
        text.push('\n');
    }
    Archive {
        text,
        lines,
        issue_events,
        distinct_issues: seen.len(),
        broken,
    }
}

/// An event archive with one `opened` event per issue plus unrelated lines.
pub fn archive_for(issues: &[IssueRecord]) -> String {
    let mut text = String::new();
    for (i, r) in issues.iter().enumerate() {
        let event = json!({
            "type": "IssuesEvent",
            "created_at": r.created_at.to_rfc3339(),
            "repo": {"name": r.repo, "language": r.repo_language},
            "payload": {
                "action": "opened",
                "issue": {
                    "id": r.id.parse::<u64>().unwrap(),
                    "title": r.title,
                    "body": r.body,
                    "labels": r.labels.iter().map(|l| json!({"name": l})).collect::<Vec<_>>(),
                    "created_at": r.created_at.to_rfc3339(),
                }
            }
        });
        text.push_str(&event.to_string());
        text.push('\n');
        if i % 10 == 0 {
            text.push_str(&json!({"type": "WatchEvent", "repo": {"name": r.repo}}).to_string());
            text.push('\n');
        }
    }
    text
}
