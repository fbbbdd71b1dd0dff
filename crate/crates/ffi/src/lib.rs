//! C ABI over the qualitagger core.
//!
//! Every fallible function returns a `QtStatus`; on failure the message is
//! available from `qt_last_error` on the same thread. Handles are opaque
//! and must be released with their `_free` function. Strings returned to
//! the caller are released with `qt_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qualitagger::classify::{tag_issue, BinaryModel, ClassifyError, EnsembleModel};
use qualitagger::corpus::normalize_text;
use qualitagger::evalstat::{self, ConfusionCounts, EvalError, Magnitude};
use qualitagger::ingest::{IssueRecord, RuleSet};
use qualitagger::QualityAttribute;

/// Number of quality attributes; score arrays have this length.
pub const QT_QUALITY_COUNT: usize = 7;

/// Result codes.
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QtStatus {
    QT_OK = 0,
    QT_NULL_ARGUMENT = 1,
    QT_INVALID_UTF8 = 2,
    QT_INVALID_ARGUMENT = 3,
    QT_IO = 4,
    QT_FORMAT = 5,
    QT_UNDEFINED = 6,
    QT_PANIC = 7,
}

/// A trained binary model.
pub struct QtModel(BinaryModel);

/// Seven binary models under a confidence threshold.
pub struct QtEnsemble(EnsembleModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(QtStatus, String);

impl From<ClassifyError> for Fail {
    fn from(e: ClassifyError) -> Self {
        let status = match &e {
            ClassifyError::Io(_) => QtStatus::QT_IO,
            ClassifyError::Format(_) | ClassifyError::InvalidFeatureDim(_) | ClassifyError::IncompleteEnsemble(_) => {
                QtStatus::QT_FORMAT
            }
            _ => QtStatus::QT_INVALID_ARGUMENT,
        };
        Fail(status, e.to_string())
    }
}

impl From<EvalError> for Fail {
    fn from(e: EvalError) -> Self {
        let status = match e {
            EvalError::UndefinedAuc | EvalError::UndefinedRate => QtStatus::QT_UNDEFINED,
            _ => QtStatus::QT_INVALID_ARGUMENT,
        };
        Fail(status, e.to_string())
    }
}

/// Runs `f`, records any failure and converts panics.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QtStatus::QT_OK,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            QtStatus::QT_PANIC
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(QtStatus::QT_NULL_ARGUMENT, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(QtStatus::QT_INVALID_UTF8, format!("{name} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn qt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Canonical name of quality `index` (0..7), or null when out of range.
#[no_mangle]
pub extern "C" fn qt_quality_name(index: usize) -> *const c_char {
    const NAMES: [&str; QT_QUALITY_COUNT] = [
        "maintainability\0",
        "security\0",
        "reliability\0",
        "usability\0",
        "compatibility\0",
        "performance\0",
        "portability\0",
    ];
    NAMES.get(index).map_or(ptr::null(), |n| n.as_ptr().cast())
}

/// Loads a model file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qt_model_load(path: *const c_char, out: *mut *mut QtModel) -> QtStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        non_null(out, "out")?;
        let file = std::fs::File::open(path).map_err(|e| Fail(QtStatus::QT_IO, format!("{path}: {e}")))?;
        let model = BinaryModel::read_from(std::io::BufReader::new(file))?;
        *out = Box::into_raw(Box::new(QtModel(model)));
        Ok(())
    })
}

/// Loads a model from the bytes of a model file.
///
/// # Safety
/// `bytes` must point to `len` readable bytes and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qt_model_from_bytes(bytes: *const u8, len: usize, out: *mut *mut QtModel) -> QtStatus {
    guard(|| {
        let bytes = slice_arg(bytes, len, "bytes")?;
        non_null(out, "out")?;
        let model = BinaryModel::from_bytes(bytes)?;
        *out = Box::into_raw(Box::new(QtModel(model)));
        Ok(())
    })
}

/// Positive-class probability of `text`.
///
/// # Safety
/// `model` must come from a `qt_model_*` constructor, `text` be a
/// nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qt_model_score(model: *const QtModel, text: *const c_char, out: *mut f64) -> QtStatus {
    guard(|| {
        non_null(model, "model")?;
        let text = str_arg(text, "text")?;
        non_null(out, "out")?;
        *out = (*model).0.score(text);
        Ok(())
    })
}

/// Index of the model's quality, or -1 for a null model.
///
/// # Safety
/// `model` must be null or come from a `qt_model_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn qt_model_quality(model: *const QtModel) -> i32 {
    if model.is_null() {
        return -1;
    }
    (*model).0.quality.index() as i32
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must be null or an unreleased handle.
#[no_mangle]
pub unsafe extern "C" fn qt_model_free(model: *mut QtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Loads `{quality}.qtag` for all seven qualities from `dir`.
///
/// # Safety
/// `dir` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qt_ensemble_load_dir(
    dir: *const c_char,
    threshold: f64,
    out: *mut *mut QtEnsemble,
) -> QtStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        non_null(out, "out")?;
        let ensemble = EnsembleModel::load_dir(Path::new(dir), threshold)?;
        *out = Box::into_raw(Box::new(QtEnsemble(ensemble)));
        Ok(())
    })
}

/// Tags one issue. Writes seven scores in canonical order to `scores` and
/// the predicted set as a bitmask (bit i for quality i) to `predicted`.
///
/// # Safety
/// `ensemble` must come from `qt_ensemble_load_dir`, `title` and `body` be
/// nul-terminated strings, `scores` point to 7 writable doubles and
/// `predicted` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qt_ensemble_tag(
    ensemble: *const QtEnsemble,
    title: *const c_char,
    body: *const c_char,
    scores: *mut f64,
    predicted: *mut u8,
) -> QtStatus {
    guard(|| {
        non_null(ensemble, "ensemble")?;
        let title = str_arg(title, "title")?;
        let body = str_arg(body, "body")?;
        non_null(scores, "scores")?;
        non_null(predicted, "predicted")?;
        let record = IssueRecord {
            id: String::new(),
            repo: String::new(),
            title: title.to_string(),
            body: body.to_string(),
            labels: Vec::new(),
            created_at: Default::default(),
            repo_language: None,
        };
        let rules = RuleSet::new(&[]).map_err(|e| Fail(QtStatus::QT_INVALID_ARGUMENT, e.to_string()))?;
        let tags = tag_issue(&(*ensemble).0, &record, &rules);
        if let Some(error) = tags.error {
            return Err(Fail(QtStatus::QT_IO, error));
        }
        let out = std::slice::from_raw_parts_mut(scores, QT_QUALITY_COUNT);
        for q in QualityAttribute::ALL {
            out[q.index()] = tags.scores[&q];
        }
        *predicted = tags.predicted.iter().fold(0u8, |m, q| m | (1 << q.index()));
        Ok(())
    })
}

/// Releases an ensemble; null is ignored.
///
/// # Safety
/// `ensemble` must be null or an unreleased handle.
#[no_mangle]
pub unsafe extern "C" fn qt_ensemble_free(ensemble: *mut QtEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Matthews correlation coefficient of a confusion matrix; 0 when any
/// marginal is zero.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qt_mcc(tp: u64, fp: u64, tn: u64, fn_: u64, out: *mut f64) -> QtStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = evalstat::mcc(&ConfusionCounts::new(tp, fp, tn, fn_)).value;
        Ok(())
    })
}

/// Area under the ROC curve; `truths` holds 0/1 per score.
///
/// # Safety
/// `scores` and `truths` must point to `len` readable elements and `out` be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qt_auc_roc(scores: *const f64, truths: *const u8, len: usize, out: *mut f64) -> QtStatus {
    guard(|| {
        let scores = slice_arg(scores, len, "scores")?;
        let truths: Vec<bool> = slice_arg(truths, len, "truths")?.iter().map(|&t| t != 0).collect();
        non_null(out, "out")?;
        *out = evalstat::auc_roc(scores, &truths)?;
        Ok(())
    })
}

/// Two-sided McNemar p-value from the discordant counts.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qt_mcnemar(b: u64, c: u64, out: *mut f64) -> QtStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = evalstat::mcnemar_exact(b, c);
        Ok(())
    })
}

/// Cliff's delta of `xs` against `ys`. `magnitude` receives 0 negligible,
/// 1 small, 2 medium or 3 large.
///
/// # Safety
/// `xs` and `ys` must point to `nx` and `ny` readable doubles; `delta` and
/// `magnitude` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn qt_cliffs_delta(
    xs: *const f64,
    nx: usize,
    ys: *const f64,
    ny: usize,
    delta: *mut f64,
    magnitude: *mut i32,
) -> QtStatus {
    guard(|| {
        let xs = slice_arg(xs, nx, "xs")?;
        let ys = slice_arg(ys, ny, "ys")?;
        non_null(delta, "delta")?;
        non_null(magnitude, "magnitude")?;
        let (d, m) = evalstat::cliffs_delta(xs, ys)?;
        *delta = d;
        *magnitude = match m {
            Magnitude::Negligible => 0,
            Magnitude::Small => 1,
            Magnitude::Medium => 2,
            Magnitude::Large => 3,
        };
        Ok(())
    })
}

/// Runs the text-cleaning pipeline. The result is released with
/// `qt_string_free`.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qt_clean_text(text: *const c_char, out: *mut *mut c_char) -> QtStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        non_null(out, "out")?;
        let cleaned = CString::new(normalize_text(text)).map_err(|e| Fail(QtStatus::QT_INVALID_ARGUMENT, e.to_string()))?;
        *out = cleaned.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet released.
#[no_mangle]
pub unsafe extern "C" fn qt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
