//! Exercises the C entry points from Rust, then compiles and runs a C
//! program against the generated header and the static library.

use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use qualitagger::classify::{tag_batch, train_binary, BinaryModel, EnsembleModel, TrainConfig};
use qualitagger::corpus::{annotate, build_binary_dataset, normalize_text};
use qualitagger::evalstat::{self, ConfusionCounts};
use qualitagger::ingest::{IssueRecord, RuleSet};
use qualitagger::QualityAttribute;
use qualitagger_ffi::*;

const WORDS: [[&str; 3]; 7] = [
    ["refactor", "cleanup", "deprecated"],
    ["vulnerability", "exploit", "injection"],
    ["crash", "segfault", "deadlock"],
    ["confusing", "tooltip", "accessibility"],
    ["safari", "firefox", "polyfill"],
    ["slow", "latency", "throughput"],
    ["windows", "macos", "freebsd"],
];

fn record(i: usize, title: &str, body: &str, labels: Vec<String>) -> IssueRecord {
    IssueRecord {
        id: i.to_string(),
        repo: "acme/app".into(),
        title: title.into(),
        body: body.into(),
        labels,
        created_at: Default::default(),
        repo_language: None,
    }
}

fn corpus() -> Vec<IssueRecord> {
    (0..140)
        .map(|i| {
            let q = QualityAttribute::ALL[i % 7];
            let w = WORDS[i % 7];
            let body = format!("the report says {} and {} after the update {}", w[i % 3], w[(i + 1) % 3], i);
            record(i, &format!("problem with {}", w[i % 3]), &body, vec![format!("kind/{}", q.name())])
        })
        .collect()
}

fn models() -> Vec<BinaryModel> {
    let annotated = annotate(corpus());
    QualityAttribute::ALL
        .iter()
        .map(|&q| train_binary(&build_binary_dataset(&annotated, q, 1).unwrap(), &TrainConfig::with_seed(4)).unwrap())
        .collect()
}

fn model_dir(models: &[BinaryModel]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for m in models {
        std::fs::write(dir.path().join(format!("{}.qtag", m.quality.name())), m.to_bytes()).unwrap();
    }
    dir
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = qt_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn quality_names_follow_canonical_order() {
    for q in QualityAttribute::ALL {
        let name = unsafe { CStr::from_ptr(qt_quality_name(q.index())) };
        assert_eq!(name.to_str().unwrap(), q.name());
    }
    assert!(qt_quality_name(QT_QUALITY_COUNT).is_null());
    assert_eq!(QualityAttribute::ALL.len(), QT_QUALITY_COUNT);
    let version = unsafe { CStr::from_ptr(qt_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn model_handles_score_like_the_library() {
    let models = models();
    let dir = model_dir(&models);
    let text = c("the app crashed with a segfault");
    for m in &models {
        let path = c(dir.path().join(format!("{}.qtag", m.quality.name())).to_str().unwrap());
        let mut handle: *mut QtModel = ptr::null_mut();
        assert_eq!(unsafe { qt_model_load(path.as_ptr(), &mut handle) }, QtStatus::QT_OK);
        let mut score = -1.0;
        assert_eq!(unsafe { qt_model_score(handle, text.as_ptr(), &mut score) }, QtStatus::QT_OK);
        assert_eq!(score, m.score("the app crashed with a segfault"));
        assert_eq!(unsafe { qt_model_quality(handle) }, m.quality.index() as i32);
        unsafe { qt_model_free(handle) };

        let bytes = m.to_bytes();
        let mut handle: *mut QtModel = ptr::null_mut();
        assert_eq!(unsafe { qt_model_from_bytes(bytes.as_ptr(), bytes.len(), &mut handle) }, QtStatus::QT_OK);
        let mut again = -1.0;
        assert_eq!(unsafe { qt_model_score(handle, text.as_ptr(), &mut again) }, QtStatus::QT_OK);
        assert_eq!(again, score);
        unsafe { qt_model_free(handle) };
    }
}

#[test]
fn ensemble_handle_tags_like_the_library() {
    let models = models();
    let dir = model_dir(&models);
    let path = c(dir.path().to_str().unwrap());
    let mut handle: *mut QtEnsemble = ptr::null_mut();
    assert_eq!(unsafe { qt_ensemble_load_dir(path.as_ptr(), 0.6, &mut handle) }, QtStatus::QT_OK);
    let local = EnsembleModel::from_models(models, 0.6).unwrap();
    let issues = vec![
        record(1, "slow page", "the latency is bad on windows", vec![]),
        record(2, "exploit found", "an injection in the login form", vec![]),
        record(3, "hello", "nothing to see", vec![]),
    ];
    let expected = tag_batch(&local, &issues, &RuleSet::new(&[]).unwrap());
    for (issue, want) in issues.iter().zip(&expected) {
        let (title, body) = (c(&issue.title), c(&issue.body));
        let mut scores = [0.0; QT_QUALITY_COUNT];
        let mut mask = 0u8;
        let status = unsafe { qt_ensemble_tag(handle, title.as_ptr(), body.as_ptr(), scores.as_mut_ptr(), &mut mask) };
        assert_eq!(status, QtStatus::QT_OK);
        for q in QualityAttribute::ALL {
            assert_eq!(scores[q.index()], want.scores[&q]);
            assert_eq!(mask & (1 << q.index()) != 0, want.predicted.contains(q));
        }
    }
    unsafe { qt_ensemble_free(handle) };
}

#[test]
fn failures_set_status_and_message() {
    let mut model: *mut QtModel = ptr::null_mut();
    let missing = c("/nonexistent/security.qtag");
    assert_eq!(unsafe { qt_model_load(missing.as_ptr(), &mut model) }, QtStatus::QT_IO);
    assert!(last_error().contains("/nonexistent/security.qtag"));
    assert!(model.is_null());

    let junk = b"not a model";
    assert_eq!(unsafe { qt_model_from_bytes(junk.as_ptr(), junk.len(), &mut model) }, QtStatus::QT_FORMAT);
    assert!(model.is_null());

    assert_eq!(unsafe { qt_model_load(ptr::null(), &mut model) }, QtStatus::QT_NULL_ARGUMENT);
    assert!(last_error().contains("path"));

    let bad_utf8 = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { qt_model_load(bad_utf8.as_ptr().cast::<c_char>(), &mut model) }, QtStatus::QT_INVALID_UTF8);

    let empty = tempfile::tempdir().unwrap();
    let dir = c(empty.path().to_str().unwrap());
    let mut ensemble: *mut QtEnsemble = ptr::null_mut();
    assert_ne!(unsafe { qt_ensemble_load_dir(dir.as_ptr(), 0.9, &mut ensemble) }, QtStatus::QT_OK);
    assert!(ensemble.is_null());

    let models = models();
    let full = model_dir(&models);
    let dir = c(full.path().to_str().unwrap());
    assert_eq!(unsafe { qt_ensemble_load_dir(dir.as_ptr(), 1.5, &mut ensemble) }, QtStatus::QT_INVALID_ARGUMENT);

    unsafe {
        qt_model_free(ptr::null_mut());
        qt_ensemble_free(ptr::null_mut());
        qt_string_free(ptr::null_mut());
    }
    assert_eq!(unsafe { qt_model_quality(ptr::null()) }, -1);
}

#[test]
fn metric_helpers_match_the_library() {
    let mut out = 0.0;
    assert_eq!(unsafe { qt_mcc(40, 10, 35, 15, &mut out) }, QtStatus::QT_OK);
    assert_eq!(out, evalstat::mcc(&ConfusionCounts::new(40, 10, 35, 15)).value);
    assert_eq!(unsafe { qt_mcc(0, 0, 10, 0, &mut out) }, QtStatus::QT_OK);
    assert_eq!(out, 0.0);

    assert_eq!(unsafe { qt_mcnemar(1, 4, &mut out) }, QtStatus::QT_OK);
    assert!((out - 0.375).abs() < 1e-12);

    let scores = [0.1, 0.4, 0.35, 0.8];
    let truths = [0u8, 0, 1, 1];
    assert_eq!(unsafe { qt_auc_roc(scores.as_ptr(), truths.as_ptr(), 4, &mut out) }, QtStatus::QT_OK);
    assert!((out - 0.75).abs() < 1e-12);
    let one_class = [1u8; 4];
    assert_eq!(unsafe { qt_auc_roc(scores.as_ptr(), one_class.as_ptr(), 4, &mut out) }, QtStatus::QT_UNDEFINED);

    let xs = [0.9, 0.8, 0.85];
    let ys = [0.1, 0.2, 0.3];
    let mut magnitude = -1;
    let status = unsafe { qt_cliffs_delta(xs.as_ptr(), 3, ys.as_ptr(), 3, &mut out, &mut magnitude) };
    assert_eq!(status, QtStatus::QT_OK);
    assert_eq!((out, magnitude), (1.0, 3));
    let status = unsafe { qt_cliffs_delta(ptr::null(), 0, ys.as_ptr(), 3, &mut out, &mut magnitude) };
    assert_eq!(status, QtStatus::QT_INVALID_ARGUMENT);
}

#[test]
fn clean_text_round_trips_through_owned_strings() {
    let raw = "Fix  the\n`crash` at <b>startup</b> https://example.com/x";
    let input = c(raw);
    let mut out: *mut c_char = ptr::null_mut();
    assert_eq!(unsafe { qt_clean_text(input.as_ptr(), &mut out) }, QtStatus::QT_OK);
    let cleaned = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_string();
    unsafe { qt_string_free(out) };
    assert_eq!(cleaned, normalize_text(raw));
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_static_library() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = target_dir().join("libqualitagger_ffi.a");
    assert!(header_dir.join("qualitagger.h").exists());
    let built = Command::new(env!("CARGO"))
        .args(["build", "--quiet", "--lib", "-p", "qualitagger-ffi", "--manifest-path"])
        .arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("Cargo.toml"))
        .status()
        .unwrap();
    assert!(built.success() && lib.exists(), "{} not built", lib.display());
    let models = models();
    let dir = model_dir(&models);
    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "qualitagger.h"

int main(int argc, char **argv) {
    QtEnsemble *ens = NULL;
    if (qt_ensemble_load_dir(argv[1], 0.6, &ens) != QT_OK) {
        fprintf(stderr, "load: %s\n", qt_last_error());
        return 2;
    }
    double scores[QT_QUALITY_COUNT];
    uint8_t mask = 0;
    if (qt_ensemble_tag(ens, "segfault", "the app hit a deadlock and crash", scores, &mask) != QT_OK) {
        return 3;
    }
    for (size_t i = 0; i < QT_QUALITY_COUNT; i++) {
        printf("%s %.17g\n", qt_quality_name(i), scores[i]);
    }
    printf("mask %u\n", (unsigned)mask);
    qt_ensemble_free(ens);
    QtModel *m = NULL;
    if (qt_model_load("/nonexistent", &m) != QT_IO || strlen(qt_last_error()) == 0) {
        return 4;
    }
    return 0;
}
"#,
    )
    .unwrap();
    let exe = work.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status();
    let Ok(status) = status else {
        eprintln!("skipping: no C compiler");
        return;
    };
    assert!(status.success(), "C build failed");
    let out = Command::new(&exe).arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();

    let local = EnsembleModel::from_models(models, 0.6).unwrap();
    let issue = record(0, "segfault", "the app hit a deadlock and crash", vec![]);
    let want = &tag_batch(&local, &[issue], &RuleSet::new(&[]).unwrap())[0];
    let mut expected = String::new();
    for q in QualityAttribute::ALL {
        expected.push_str(&format!("{} {}\n", q.name(), want.scores[&q]));
    }
    let mask: u32 = want.predicted.iter().map(|q| 1 << q.index()).sum();
    expected.push_str(&format!("mask {mask}\n"));
    let parsed: Vec<String> = stdout
        .lines()
        .map(|l| {
            let (name, v) = l.split_once(' ').unwrap();
            match v.parse::<f64>() {
                Ok(x) if name != "mask" => format!("{name} {x}"),
                _ => l.to_string(),
            }
        })
        .collect();
    assert_eq!(parsed.join("\n") + "\n", expected);
    assert!(want.predicted.contains(QualityAttribute::Reliability));
}
