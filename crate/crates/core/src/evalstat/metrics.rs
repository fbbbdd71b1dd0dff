//! Binary classification metrics.

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Tallies boolean predictions against truths.
    pub fn from_predictions(preds: &[bool], truths: &[bool]) -> Result<Self, EvalError> {
        check_lengths(preds.len(), truths.len())?;
        let mut c = ConfusionCounts::default();
        for (&p, &t) in preds.iter().zip(truths) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }
}

pub(crate) fn check_lengths(a: usize, b: usize) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// A metric value; `degenerate` is set when the zero-denominator rule
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub degenerate: bool,
}

impl Ratio {
    pub(crate) fn of(num: f64, den: f64) -> Ratio {
        if den == 0.0 {
            Ratio {
                value: 0.0,
                degenerate: true,
            }
        } else {
            Ratio {
                value: num / den,
                degenerate: false,
            }
        }
    }
}

/// Thresholds scores (`score ≥ threshold` is positive) and tallies counts.
pub fn confusion(scores: &[f64], truths: &[bool], threshold: f64) -> Result<ConfusionCounts, EvalError> {
    check_lengths(scores.len(), truths.len())?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let preds: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    ConfusionCounts::from_predictions(&preds, truths)
}

pub fn precision(c: &ConfusionCounts) -> Ratio {
    Ratio::of(c.tp as f64, (c.tp + c.fp) as f64)
}

pub fn recall(c: &ConfusionCounts) -> Ratio {
    Ratio::of(c.tp as f64, (c.tp + c.fn_) as f64)
}

pub fn accuracy(c: &ConfusionCounts) -> Ratio {
    Ratio::of((c.tp + c.tn) as f64, c.total() as f64)
}

/// Harmonic mean of precision and recall.
pub fn f1(c: &ConfusionCounts) -> Ratio {
    let p = precision(c).value;
    let r = recall(c).value;
    Ratio::of(2.0 * p * r, p + r)
}

/// Matthews correlation coefficient; 0.0 (degenerate) when any marginal is
/// zero.
pub fn mcc(c: &ConfusionCounts) -> Ratio {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.contains(&0.0) {
        return Ratio::of(0.0, 0.0);
    }
    let den = factors.iter().product::<f64>().sqrt();
    Ratio {
        value: ((tp * tn - fp * fn_) / den).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

/// Area under the ROC curve as P(score⁺ > score⁻) + ½·P(tie), via
/// tie-averaged ranks.
pub fn auc_roc(scores: &[f64], truths: &[bool]) -> Result<f64, EvalError> {
    check_lengths(scores.len(), truths.len())?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let n_pos = truths.iter().filter(|&&t| t).count();
    let n_neg = truths.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::UndefinedAuc);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the tie group i..=j shares their mean
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if truths[k] {
                pos_rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos = n_pos as f64;
    let u = pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg as f64))
}

/// The full set of binary metrics for one classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub mcc: f64,
    /// `None` when the truths hold a single class.
    pub auc: Option<f64>,
    pub counts: ConfusionCounts,
    pub n: usize,
    pub threshold: f64,
    /// Metrics that fell back to the zero-denominator rule.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

impl EvalReport {
    pub fn compute(scores: &[f64], truths: &[bool], threshold: f64) -> Result<Self, EvalError> {
        let counts = confusion(scores, truths, threshold)?;
        let auc = match auc_roc(scores, truths) {
            Ok(a) => Some(a),
            Err(EvalError::UndefinedAuc) => None,
            Err(e) => return Err(e),
        };
        Ok(Self::from_counts(counts, auc, threshold))
    }

    pub fn from_counts(counts: ConfusionCounts, auc: Option<f64>, threshold: f64) -> Self {
        let metrics = [
            ("precision", precision(&counts)),
            ("recall", recall(&counts)),
            ("accuracy", accuracy(&counts)),
            ("f1", f1(&counts)),
            ("mcc", mcc(&counts)),
        ];
        let degenerate = metrics
            .iter()
            .filter(|(_, r)| r.degenerate)
            .map(|(name, _)| name.to_string())
            .collect();
        EvalReport {
            precision: metrics[0].1.value,
            recall: metrics[1].1.value,
            accuracy: metrics[2].1.value,
            f1: metrics[3].1.value,
            mcc: metrics[4].1.value,
            auc,
            counts,
            n: counts.total() as usize,
            threshold,
            degenerate,
        }
    }
}
