//! The `qualitagger` binary end to end.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qualitagger::QualityAttribute;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_qualitagger");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("QUALITAGGER_BACKEND_URL").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Runs mine through tag into `dir`; returns the tagged output path.
fn pipeline(dir: &Path, archive: &str) -> PathBuf {
    let events = dir.join("events.jsonl");
    std::fs::write(&events, archive).unwrap();
    let issues = dir.join("issues.jsonl");
    ok(&["mine", "--input", p(&events), "--out", p(&issues)]);
    let clean = dir.join("clean.jsonl");
    ok(&["clean", "--input", p(&issues), "--out", p(&clean)]);
    let datasets = dir.join("datasets");
    ok(&["build-dataset", "--input", p(&clean), "--seed", "7", "--out", p(&datasets)]);
    let models = dir.join("models");
    std::fs::create_dir(&models).unwrap();
    for q in QualityAttribute::ALL {
        let data = datasets.join(format!("{}.jsonl", q.name()));
        ok(&["train", "--input", p(&data), "--seed", "1", "--out", p(&models)]);
    }
    let tagged = dir.join("tagged.jsonl");
    ok(&["tag", "--input", p(&clean), "--model-dir", p(&models), "--threshold", "0.5", "--out", p(&tagged)]);
    tagged
}

fn corpus_archive() -> String {
    common::archive_for(&common::planted_corpus(280, 21))
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let tagged = pipeline(d, &corpus_archive());

    assert_eq!(lines(&d.join("issues.jsonl")).len(), 280);
    assert_eq!(lines(&d.join("clean.jsonl")).len(), 280);
    for q in QualityAttribute::ALL {
        let data = lines(&d.join("datasets").join(format!("{}.jsonl", q.name())));
        let pos = data.iter().filter(|e| e["label"] == 1).count();
        assert_eq!(pos * 2, data.len(), "{q}");
        assert!(d.join("models").join(format!("{}.qtag", q.name())).exists());
    }
    let tags = lines(&tagged);
    assert_eq!(tags.len(), 280);
    assert!(tags.iter().all(|t| t["scores"].as_object().unwrap().len() == 7 && t["repo"].is_string()));

    // evaluate the tags against the issues' labels
    let truth = d.join("truth.jsonl");
    let truth_lines: String = lines(&d.join("clean.jsonl"))
        .iter()
        .map(|r| format!("{}\n", serde_json::json!({"id": r["id"], "labels": r["labels"]})))
        .collect();
    std::fs::write(&truth, truth_lines).unwrap();
    let report: Value = serde_json::from_str(&ok(&["evaluate", "--preds", p(&tagged), "--truth", p(&truth)])).unwrap();
    let ml = &report["multilabel"];
    assert_eq!(ml["n"], 280);
    assert!(ml["at_least_one_match"].as_f64().unwrap() >= 0.9, "{ml}");
    assert!(ml["hamming_loss"].as_f64().unwrap() <= 0.1, "{ml}");
    assert_eq!(report["per_quality"].as_object().unwrap().len(), 7);

    let single: Value = serde_json::from_str(&ok(&[
        "evaluate", "--preds", p(&tagged), "--truth", p(&truth), "--quality", "security", "--threshold", "0.5",
    ]))
    .unwrap();
    assert!(single["f1"].as_f64().unwrap() >= 0.9, "{single}");
    let text = ok(&["evaluate", "--preds", p(&tagged), "--truth", p(&truth), "--format", "text"]);
    assert!(text.contains("Hamming"), "{text}");

    // compare against a second run with a stricter threshold
    let strict = d.join("strict.jsonl");
    ok(&["tag", "--input", p(&d.join("clean.jsonl")), "--model-dir", p(&d.join("models")), "--out", p(&strict)]);
    let cmp: Value = serde_json::from_str(&ok(&[
        "compare", "--a", p(&tagged), "--b", p(&strict), "--truth", p(&truth), "--quality", "security",
        "--iterations", "300", "--seed", "4", "--threshold", "0.5",
    ]))
    .unwrap();
    let row = &cmp.as_array().unwrap()[0];
    assert_eq!(row["category"], "security");
    assert!(row["mcnemar_p"].as_f64().unwrap() <= 1.0);
    let table = ok(&[
        "compare", "--a", p(&tagged), "--b", p(&tagged), "--truth", p(&truth), "--iterations", "200", "--seed", "4",
        "--format", "text",
    ]);
    assert!(table.contains("McNemar"), "{table}");

    // analysis in every format
    let analysis: Value = serde_json::from_str(&ok(&["analyze", "--input", p(&tagged)])).unwrap();
    assert_eq!(analysis["total_issues"], 280);
    assert_eq!(analysis["frequency"].as_array().unwrap().len(), 7);
    let text = ok(&["analyze", "--input", p(&tagged), "--format", "text"]);
    assert!(text.contains("Security"), "{text}");
    let csv_dir = d.join("tables");
    ok(&["analyze", "--input", p(&tagged), "--format", "csv", "--out", p(&csv_dir)]);
    let freq = std::fs::read_to_string(csv_dir.join("frequency.csv")).unwrap();
    // five repositories plus the overall rows, seven qualities each
    assert_eq!(freq.lines().count(), 1 + 6 * 7, "{freq}");
    assert_eq!(freq.lines().filter(|l| l.starts_with("(all),")).count(), 7);
    for table in ["specificity", "peaks", "td_impact", "languages"] {
        assert!(csv_dir.join(format!("{table}.csv")).exists(), "{table}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let archive = corpus_archive();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ta = pipeline(a.path(), &archive);
    let tb = pipeline(b.path(), &archive);
    for q in QualityAttribute::ALL {
        let name = format!("{}.qtag", q.name());
        assert_eq!(
            std::fs::read(a.path().join("models").join(&name)).unwrap(),
            std::fs::read(b.path().join("models").join(&name)).unwrap()
        );
    }
    assert_eq!(std::fs::read(ta).unwrap(), std::fs::read(tb).unwrap());
}

#[test]
fn split_and_cross_validation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let clean = d.join("clean.jsonl");
    let records: String = common::planted_corpus(210, 2)
        .iter()
        .map(|r| format!("{}\n", serde_json::to_string(r).unwrap()))
        .collect();
    std::fs::write(&clean, records).unwrap();
    let data = d.join("security.jsonl");
    ok(&["build-dataset", "--input", p(&clean), "--quality", "security", "--seed", "3", "--out", p(&data)]);
    let manifest = d.join("manifest.json");
    ok(&["split", "--input", p(&data), "--seed", "5", "--k", "3", "--out", p(&manifest)]);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["k"], 3);
    let (train, test) = (m["train_ids"].as_array().unwrap(), m["test_ids"].as_array().unwrap());
    assert_eq!(train.len() + test.len(), lines(&data).len());
    assert!(train.iter().all(|id| !test.contains(id)));

    let report = d.join("report.json");
    let model = d.join("security.qtag");
    ok(&[
        "train", "--input", p(&data), "--manifest", p(&manifest), "--cv", "--seed", "1", "--out", p(&model),
        "--report", p(&report), "--threshold", "0.5",
    ]);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["train_size"].as_u64().unwrap() as usize, train.len());
    assert_eq!(r["folds"].as_array().unwrap().len(), 3);
    assert!(r["test"]["f1"].as_f64().unwrap() >= 0.9, "{r}");

    let loo = d.join("loo.json");
    ok(&["split", "--input", p(&data), "--seed", "5", "--holdout-repo", "auto", "--out", p(&loo)]);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&loo).unwrap()).unwrap();
    assert!(m["held_out_repo"].as_str().unwrap().starts_with("acme/repo"));
}

#[test]
fn help_for_every_subcommand() {
    let top = ok(&["--help"]);
    for sub in [
        "mine", "clean", "build-dataset", "split", "train", "tag", "evaluate", "compare", "analyze", "serve-stub",
    ] {
        assert!(top.contains(sub), "{sub} missing from help");
        let help = ok(&[sub, "--help"]);
        assert!(help.contains("Usage"), "{sub}: {help}");
    }
    ok(&["--version"]);
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| run(args).status.code().unwrap();
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["build-dataset", "--input", "x.jsonl", "--out", "y"]), 1);
    assert_eq!(code(&["tag", "--input", "x", "--threshold", "1.5"]), 1);
    assert_eq!(code(&["split", "--input", "x", "--seed", "1", "--k", "1"]), 1);

    let missing = run(&["clean", "--input", "/nonexistent/issues.jsonl"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/issues.jsonl"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{not json\n").unwrap();
    assert_eq!(code(&["analyze", "--input", p(&bad)]), 2);
}

#[test]
fn tag_through_serve_stub() {
    let mut child = Command::new(BIN)
        .args(["serve-stub", "--port", "0", "--score", "0.95"])
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut url = String::new();
    std::io::BufRead::read_line(&mut std::io::BufReader::new(child.stdout.take().unwrap()), &mut url).unwrap();
    let url = url.trim().to_string();
    assert!(url.starts_with("http://127.0.0.1:"), "{url}");

    let dir = tempfile::tempdir().unwrap();
    let issues = dir.path().join("issues.jsonl");
    let records: String = common::planted_corpus(20, 4)
        .iter()
        .map(|r| format!("{}\n", serde_json::to_string(r).unwrap()))
        .collect();
    std::fs::write(&issues, records).unwrap();
    let out = ok(&["tag", "--input", p(&issues), "--backend-url", &url]);
    let tags: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(tags.len(), 20);
    assert!(tags.iter().all(|t| t["predicted"].as_array().unwrap().len() == 7));

    // the environment variable works the same way
    let via_env = Command::new(BIN)
        .args(["tag", "--input", p(&issues)])
        .env("QUALITAGGER_BACKEND_URL", &url)
        .output()
        .unwrap();
    assert!(via_env.status.success());
    assert_eq!(String::from_utf8(via_env.stdout).unwrap(), out);

    child.kill().unwrap();
    child.wait().unwrap();
    // an unreachable backend yields tags that name the failed members
    let down = run(&["tag", "--input", p(&issues), "--backend-url", &url]);
    assert!(down.status.success());
    assert!(String::from_utf8_lossy(&down.stderr).contains("failed ensemble members"));
    let first: Value = serde_json::from_str(String::from_utf8(down.stdout).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["failed"].as_array().unwrap().len(), 7, "{first}");
    assert!(first["predicted"].as_array().unwrap().is_empty());
    assert!(first["error"].is_string());
}
