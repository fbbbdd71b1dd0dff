//! Tokenization and hashed bag-of-words features.

use crate::hash::fnv1a64;

pub const DEFAULT_FEATURE_DIM: usize = 1 << 18;

/// Unigrams of length ≥ 2 followed by adjacent bigrams joined with `_`.
pub fn tokenize(text: &str) -> Vec<String> {
    let unigrams: Vec<&str> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .collect();
    let mut tokens: Vec<String> = unigrams.iter().map(|t| t.to_string()).collect();
    tokens.extend(unigrams.windows(2).map(|w| format!("{}_{}", w[0], w[1])));
    tokens
}

/// Sparse feature vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn dot(&self, dense: &[f32]) -> f64 {
        self.iter().map(|(i, v)| v * f64::from(dense[i])).sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Bucket of a token in a `feature_dim`-wide hashed space.
pub fn feature_index(token: &str, feature_dim: usize) -> u32 {
    debug_assert!(feature_dim.is_power_of_two());
    (fnv1a64(token.as_bytes()) & (feature_dim as u64 - 1)) as u32
}

/// Hashes tokens into `feature_dim` buckets with count accumulation, then
/// L2-normalizes.
pub fn featurize<S: AsRef<str>>(tokens: &[S], feature_dim: usize) -> SparseVector {
    let mut idx: Vec<u32> = tokens
        .iter()
        .map(|t| feature_index(t.as_ref(), feature_dim))
        .collect();
    idx.sort_unstable();

    let mut out = SparseVector::default();
    for i in idx {
        if out.indices.last() == Some(&i) {
            *out.values.last_mut().unwrap() += 1.0;
        } else {
            out.indices.push(i);
            out.values.push(1.0);
        }
    }
    let norm = out.norm();
    if norm > 0.0 {
        out.values.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

pub fn featurize_text(text: &str, feature_dim: usize) -> SparseVector {
    featurize(&tokenize(text), feature_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("null pointer crash"),
            ["null", "pointer", "crash", "null_pointer", "pointer_crash"]
        );
        assert!(tokenize("a b").is_empty());
        assert_eq!(tokenize("xss"), ["xss"]);
        assert_eq!(tokenize("use-after-free!"), ["use", "after", "free", "use_after", "after_free"]);
    }

    #[test]
    fn featurize_examples() {
        let empty: [&str; 0] = [];
        assert!(featurize(&empty, 1024).is_zero());

        let v = featurize(&["tt", "tt"], 1024);
        assert_eq!(v.indices.len(), 1);
        assert_eq!(v.values, vec![1.0]);

        let dim = DEFAULT_FEATURE_DIM;
        let (a, b) = ("vuln", "button");
        assert_ne!(feature_index(a, dim), feature_index(b, dim));
        let v = featurize(&[a, b], dim);
        assert_eq!(v.indices.len(), 2);
        for x in &v.values {
            assert_relative_eq!(*x, 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        }
    }

    #[test]
    fn counts_accumulate_before_normalizing() {
        let dim = DEFAULT_FEATURE_DIM;
        let v = featurize(&["aa", "aa", "bb"], dim);
        let ia = feature_index("aa", dim);
        let pos = v.indices.iter().position(|&i| i == ia).unwrap();
        assert_relative_eq!(v.values[pos], 2.0 / 5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-15);
    }
}
