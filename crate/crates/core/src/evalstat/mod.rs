//! Evaluation metrics and classifier comparison statistics.

mod compare;
mod metrics;
mod multilabel;

pub use compare::{
    bootstrap_f1, cliffs_delta, compare, discordant_pairs, mcnemar_exact, percentile, t_test_f1,
    BootstrapResult, ComparisonReport, Magnitude, TTest, DEFAULT_BOOTSTRAP_ITERATIONS,
    MCNEMAR_EXACT_LIMIT,
};
pub use metrics::{
    accuracy, auc_roc, confusion, f1, mcc, precision, recall, ConfusionCounts, EvalReport, Ratio,
};
pub use multilabel::{at_least_one_match, hamming_loss, micro_prf, MicroPrf, MultiLabelReport};

use crate::table::TextTable;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {left} predictions vs {right} truths")]
    LengthMismatch { left: usize, right: usize },
    #[error("no instances to evaluate")]
    Empty,
    #[error("non-finite score")]
    NonFinite,
    #[error("AUC is undefined when the truths hold a single class")]
    UndefinedAuc,
    #[error("at-least-one-match rate is undefined when every true set is empty")]
    UndefinedRate,
    #[error("bootstrap needs at least one iteration")]
    InvalidIterations,
    #[error("t-test needs at least two samples per group")]
    TooFewSamples,
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn fmt_ci(ci: [f64; 2]) -> String {
    format!("[{:.4}, {:.4}]", ci[0], ci[1])
}

/// One row per named classifier, in the order given.
pub fn eval_table<'a>(rows: impl IntoIterator<Item = (&'a str, &'a EvalReport)>) -> TextTable {
    let mut t = TextTable::new(["Model", "Precision", "Recall", "Accuracy", "MCC", "F1", "AUC", "N"]);
    for (name, r) in rows {
        t.row([
            name.to_string(),
            fmt4(r.precision),
            fmt4(r.recall),
            fmt4(r.accuracy),
            fmt4(r.mcc),
            fmt4(r.f1),
            r.auc.map_or_else(|| "n/a".to_string(), fmt4),
            r.n.to_string(),
        ]);
    }
    t
}

pub fn multilabel_table(r: &MultiLabelReport) -> TextTable {
    let mut t = TextTable::new(["Metric", "Value"]);
    t.row(["Hamming Loss".to_string(), fmt4(r.hamming_loss)])
        .row(["Micro-averaged Precision".to_string(), fmt4(r.micro_precision)])
        .row(["Micro-averaged Recall".to_string(), fmt4(r.micro_recall)])
        .row(["Micro-averaged F1".to_string(), fmt4(r.micro_f1)])
        .row(["At Least One Match Rate".to_string(), fmt4(r.at_least_one_match)])
        .row(["Instances".to_string(), r.n.to_string()]);
    t
}

/// One row per compared category. The significance cell names the model
/// with the higher F1 when the difference CI excludes zero.
pub fn comparison_table<'a>(
    rows: impl IntoIterator<Item = (&'a str, &'a ComparisonReport)>,
) -> TextTable {
    let mut t = TextTable::new([
        "Category",
        "McNemar (p)",
        "Bootstrap (Sig. Diff)",
        "t-test (p)",
        "Cliff's Delta",
        "Model A CI",
        "Model B CI",
    ]);
    for (name, r) in rows {
        let sig = match (r.bootstrap.significant, r.bootstrap.ci_diff[0] > 0.0) {
            (false, _) => "No",
            (true, true) => "Yes (A)",
            (true, false) => "Yes (B)",
        };
        t.row([
            name.to_string(),
            fmt4(r.mcnemar_p),
            sig.to_string(),
            fmt4(r.t_p),
            format!("{:.4} ({})", r.cliffs_delta, r.magnitude.letter()),
            fmt_ci(r.bootstrap.ci_a),
            fmt_ci(r.bootstrap.ci_b),
        ]);
    }
    t
}
