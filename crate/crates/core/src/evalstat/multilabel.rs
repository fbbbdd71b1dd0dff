//! Multi-label metrics over quality sets.

use serde::{Deserialize, Serialize};

use super::metrics::{check_lengths, Ratio};
use super::EvalError;
use crate::quality::{QualitySet, QUALITY_COUNT};

/// Σ |pred Δ truth| / (n · 7).
pub fn hamming_loss(preds: &[QualitySet], truths: &[QualitySet]) -> Result<f64, EvalError> {
    check_lengths(preds.len(), truths.len())?;
    let wrong: usize = preds
        .iter()
        .zip(truths)
        .map(|(p, t)| p.symmetric_difference(*t).len())
        .sum();
    Ok(wrong as f64 / (preds.len() * QUALITY_COUNT) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroPrf {
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
}

/// Precision, recall and F1 over TP/FP/FN pooled across all
/// (instance, label) pairs.
pub fn micro_prf(preds: &[QualitySet], truths: &[QualitySet]) -> Result<MicroPrf, EvalError> {
    check_lengths(preds.len(), truths.len())?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, t) in preds.iter().zip(truths) {
        tp += p.intersection(*t).len();
        fp += p.intersection(t.complement()).len();
        fn_ += t.intersection(p.complement()).len();
    }
    let precision = Ratio::of(tp as f64, (tp + fp) as f64);
    let recall = Ratio::of(tp as f64, (tp + fn_) as f64);
    let f1 = Ratio::of(
        2.0 * precision.value * recall.value,
        precision.value + recall.value,
    );
    Ok(MicroPrf {
        precision,
        recall,
        f1,
    })
}

/// Fraction of instances with a nonempty truth whose prediction shares at
/// least one quality with it.
pub fn at_least_one_match(preds: &[QualitySet], truths: &[QualitySet]) -> Result<f64, EvalError> {
    check_lengths(preds.len(), truths.len())?;
    let (mut hits, mut counted) = (0usize, 0usize);
    for (p, t) in preds.iter().zip(truths) {
        if t.is_empty() {
            continue;
        }
        counted += 1;
        if !p.intersection(*t).is_empty() {
            hits += 1;
        }
    }
    if counted == 0 {
        return Err(EvalError::UndefinedRate);
    }
    Ok(hits as f64 / counted as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelReport {
    pub hamming_loss: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub at_least_one_match: f64,
    pub n: usize,
    pub label_universe: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

impl MultiLabelReport {
    pub fn compute(preds: &[QualitySet], truths: &[QualitySet]) -> Result<Self, EvalError> {
        let micro = micro_prf(preds, truths)?;
        let degenerate = [
            ("micro_precision", micro.precision),
            ("micro_recall", micro.recall),
            ("micro_f1", micro.f1),
        ]
        .iter()
        .filter(|(_, r)| r.degenerate)
        .map(|(name, _)| name.to_string())
        .collect();
        Ok(MultiLabelReport {
            hamming_loss: hamming_loss(preds, truths)?,
            micro_precision: micro.precision.value,
            micro_recall: micro.recall.value,
            micro_f1: micro.f1.value,
            at_least_one_match: at_least_one_match(preds, truths)?,
            n: preds.len(),
            label_universe: QUALITY_COUNT,
            degenerate,
        })
    }
}
