//! Paired classifier comparison: McNemar, bootstrap F1, Welch t-test and
//! Cliff's delta.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use super::metrics::{check_lengths, f1, ConfusionCounts};
use super::EvalError;

pub const DEFAULT_BOOTSTRAP_ITERATIONS: usize = 10_000;

/// Discordant-pair total up to which the exact binomial branch is used.
pub const MCNEMAR_EXACT_LIMIT: u64 = 25;

/// Counts discordant pairs: `b` = A right and B wrong, `c` = A wrong and B
/// right.
pub fn discordant_pairs(
    preds_a: &[bool],
    preds_b: &[bool],
    truths: &[bool],
) -> Result<(u64, u64), EvalError> {
    check_lengths(preds_a.len(), truths.len())?;
    check_lengths(preds_b.len(), truths.len())?;
    let (mut b, mut c) = (0, 0);
    for ((&a, &bb), &t) in preds_a.iter().zip(preds_b).zip(truths) {
        match (a == t, bb == t) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok((b, c))
}

/// Two-sided McNemar p-value: exact binomial up to 25 discordant pairs,
/// continuity-corrected chi-square above.
pub fn mcnemar_exact(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    if n <= MCNEMAR_EXACT_LIMIT {
        let k = b.min(c);
        let mut binom: u64 = 1;
        let mut tail: u64 = 0;
        for i in 0..=k {
            tail += binom;
            binom = binom * (n - i) / (i + 1);
        }
        return (2.0 * tail as f64 / (1u64 << n) as f64).min(1.0);
    }
    let diff = (b.abs_diff(c) as f64 - 1.0).max(0.0);
    let chi2 = diff * diff / n as f64;
    erfc((chi2 / 2.0).sqrt()).clamp(0.0, 1.0)
}

/// Linear-interpolated percentile of sorted data, `p` in [0, 1].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn percentile_ci(samples: &[f64]) -> [f64; 2] {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    [percentile(&sorted, 0.025), percentile(&sorted, 0.975)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub iterations: usize,
    pub ci_a: [f64; 2],
    pub ci_b: [f64; 2],
    /// CI of F1(A) − F1(B).
    pub ci_diff: [f64; 2],
    pub significant: bool,
    #[serde(skip)]
    pub samples_a: Vec<f64>,
    #[serde(skip)]
    pub samples_b: Vec<f64>,
}

/// Resamples instances with replacement and records each model's F1 per
/// resample. Each iteration draws from its own ChaCha stream keyed by
/// `(seed, iteration)`, so the result is independent of scheduling.
pub fn bootstrap_f1(
    preds_a: &[bool],
    preds_b: &[bool],
    truths: &[bool],
    iterations: usize,
    seed: u64,
) -> Result<BootstrapResult, EvalError> {
    check_lengths(preds_a.len(), truths.len())?;
    check_lengths(preds_b.len(), truths.len())?;
    if iterations == 0 {
        return Err(EvalError::InvalidIterations);
    }
    let n = truths.len();
    let pairs: Vec<(f64, f64)> = (0..iterations)
        .into_par_iter()
        .map(|iter| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(iter as u64);
            let mut ca = ConfusionCounts::default();
            let mut cb = ConfusionCounts::default();
            for _ in 0..n {
                let i = rng.random_range(0..n);
                tally(&mut ca, preds_a[i], truths[i]);
                tally(&mut cb, preds_b[i], truths[i]);
            }
            (f1(&ca).value, f1(&cb).value)
        })
        .collect();
    let (samples_a, samples_b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let diffs: Vec<f64> = samples_a.iter().zip(&samples_b).map(|(a, b)| a - b).collect();
    let ci_diff = percentile_ci(&diffs);
    Ok(BootstrapResult {
        iterations,
        ci_a: percentile_ci(&samples_a),
        ci_b: percentile_ci(&samples_b),
        ci_diff,
        significant: ci_diff[0] > 0.0 || ci_diff[1] < 0.0,
        samples_a,
        samples_b,
    })
}

fn tally(c: &mut ConfusionCounts, pred: bool, truth: bool) {
    match (pred, truth) {
        (true, true) => c.tp += 1,
        (true, false) => c.fp += 1,
        (false, false) => c.tn += 1,
        (false, true) => c.fn_ += 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch two-sample t-test with a two-sided p-value.
pub fn t_test_f1(a: &[f64], b: &[f64]) -> Result<TTest, EvalError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(EvalError::TooFewSamples);
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if ma == mb {
            TTest { t: 0.0, p: 1.0, df }
        } else {
            TTest {
                t: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY },
                p: 0.0,
                df,
            }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0);
    Ok(TTest { t, p, df })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    /// Classifies |δ| on the 0.147 / 0.33 / 0.474 scale.
    pub fn of(delta: f64) -> Magnitude {
        let d = delta.abs();
        if d < 0.147 {
            Magnitude::Negligible
        } else if d < 0.33 {
            Magnitude::Small
        } else if d < 0.474 {
            Magnitude::Medium
        } else {
            Magnitude::Large
        }
    }

    pub fn letter(self) -> char {
        match self {
            Magnitude::Negligible => 'N',
            Magnitude::Small => 'S',
            Magnitude::Medium => 'M',
            Magnitude::Large => 'L',
        }
    }
}

/// δ = (#(x > y) − #(x < y)) / (|xs|·|ys|) over all pairs.
pub fn cliffs_delta(xs: &[f64], ys: &[f64]) -> Result<(f64, Magnitude), EvalError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(EvalError::Empty);
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let mut sorted = ys.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut dominance: i64 = 0;
    for &x in xs {
        let below = sorted.partition_point(|&y| y < x);
        let not_above = sorted.partition_point(|&y| y <= x);
        let above = sorted.len() - not_above;
        dominance += below as i64 - above as i64;
    }
    let delta = dominance as f64 / (xs.len() as f64 * ys.len() as f64);
    Ok((delta, Magnitude::of(delta)))
}

/// Everything reported when comparing model A against model B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n: usize,
    pub f1_a: f64,
    pub f1_b: f64,
    pub mcnemar_b: u64,
    pub mcnemar_c: u64,
    pub mcnemar_p: f64,
    pub bootstrap: BootstrapResult,
    pub t_stat: f64,
    pub t_p: f64,
    pub cliffs_delta: f64,
    pub magnitude: Magnitude,
}

/// Runs every comparison statistic; the t-test and Cliff's delta use the
/// bootstrap F1 samples.
pub fn compare(
    preds_a: &[bool],
    preds_b: &[bool],
    truths: &[bool],
    iterations: usize,
    seed: u64,
) -> Result<ComparisonReport, EvalError> {
    let (b, c) = discordant_pairs(preds_a, preds_b, truths)?;
    let boot = bootstrap_f1(preds_a, preds_b, truths, iterations, seed)?;
    let t = t_test_f1(&boot.samples_a, &boot.samples_b)?;
    let (delta, magnitude) = cliffs_delta(&boot.samples_a, &boot.samples_b)?;
    Ok(ComparisonReport {
        n: truths.len(),
        f1_a: f1(&ConfusionCounts::from_predictions(preds_a, truths)?).value,
        f1_b: f1(&ConfusionCounts::from_predictions(preds_b, truths)?).value,
        mcnemar_b: b,
        mcnemar_c: c,
        mcnemar_p: mcnemar_exact(b, c),
        bootstrap: boot,
        t_stat: t.t,
        t_p: t.p,
        cliffs_delta: delta,
        magnitude,
    })
}
