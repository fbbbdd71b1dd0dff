//! Built-in classifiers, the thresholded seven-model ensemble and the remote
//! backend client.

mod binary;
mod ensemble;
mod features;
mod multiclass;
pub mod remote;

use std::io;

use base64::Engine;
use serde::{Deserialize, Serialize};

pub use binary::{predict_score, sigmoid, train_binary, train_binary_traced, train_binary_with, BinaryModel};
pub use ensemble::{tag_batch, tag_issue, EnsembleModel, Scorer, TagSet, DEFAULT_THRESHOLD};
pub use features::{feature_index, featurize, featurize_text, tokenize, SparseVector, DEFAULT_FEATURE_DIM};
pub use multiclass::{
    class_weights, multiclass_label, predict_multiclass, softmax, train_multiclass,
    train_multiclass_for, MulticlassModel,
};
pub use remote::{remote_predict, RemoteBackend, RemoteError};

use crate::quality::QualityAttribute;

pub const MODEL_VERSION_TAG: &str = "QTAG1";
pub const MULTICLASS_VERSION_TAG: &str = "QTAGM1";

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("training set is empty")]
    EmptyTraining,
    #[error("training set for '{0}' contains a single class")]
    SingleClass(String),
    #[error("class '{0}' has no examples")]
    MissingClass(QualityAttribute),
    #[error("class '{0}' has a zero count")]
    ZeroCount(QualityAttribute),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("feature dimension must be a power of two, got {0}")]
    InvalidFeatureDim(usize),
    #[error("model file: {0}")]
    Format(String),
    #[error("ensemble needs all seven qualities, missing {0}")]
    IncompleteEnsemble(QualityAttribute),
    #[error("threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Optimizer settings for the built-in models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub batch_size: usize,
}

impl TrainConfig {
    /// Default hyperparameters with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 10,
            weight_decay: 0.01,
            seed,
            batch_size: 32,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |msg: String| Err(ClassifyError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.learning_rate * self.weight_decay >= 1.0 {
            return bad("learning_rate * weight_decay must be < 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        Ok(())
    }
}

pub(crate) fn encode_weights(weights: &[f32]) -> String {
    let bytes: Vec<u8> = weights.iter().flat_map(|w| w.to_le_bytes()).collect();
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub(crate) fn decode_weights(encoded: &str) -> Result<Vec<f32>, ClassifyError> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(encoded)
        .map_err(|e| ClassifyError::Format(format!("weights are not valid base64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(ClassifyError::Format("weight byte length not a multiple of 4".into()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Splits `header` off a model file and returns the JSON remainder.
pub(crate) fn strip_header<'a>(bytes: &'a [u8], header: &str) -> Result<&'a [u8], ClassifyError> {
    let rest = bytes
        .strip_prefix(header.as_bytes())
        .ok_or_else(|| ClassifyError::Format(format!("missing '{header}' header")))?;
    // "QTAG1" is a prefix of nothing else we write, but "QTAGM1" must not
    // be read as a binary model.
    match rest.first() {
        Some(b'\n' | b'\r' | b' ' | b'{') => Ok(rest),
        _ => Err(ClassifyError::Format(format!("missing '{header}' header"))),
    }
}

pub(crate) fn check_feature_dim(dim: usize) -> Result<(), ClassifyError> {
    if dim == 0 || !dim.is_power_of_two() || dim > u32::MAX as usize {
        return Err(ClassifyError::InvalidFeatureDim(dim));
    }
    Ok(())
}

/// Dense weights stored as `scale * v`, so L2 decay is a single multiply.
pub(crate) struct ScaledWeights {
    v: Vec<f64>,
    scale: f64,
}

impl ScaledWeights {
    pub(crate) fn zeros(len: usize) -> Self {
        ScaledWeights {
            v: vec![0.0; len],
            scale: 1.0,
        }
    }

    pub(crate) fn dot(&self, x: &SparseVector, offset: usize) -> f64 {
        self.scale * x.iter().map(|(i, val)| self.v[offset + i] * val).sum::<f64>()
    }

    pub(crate) fn decay(&mut self, factor: f64) {
        self.scale *= factor;
        if self.scale < 1e-9 {
            let s = self.scale;
            self.v.iter_mut().for_each(|w| *w *= s);
            self.scale = 1.0;
        }
    }

    pub(crate) fn add(&mut self, idx: usize, delta: f64) {
        self.v[idx] += delta / self.scale;
    }

    pub(crate) fn squared_norm(&self) -> f64 {
        self.scale * self.scale * self.v.iter().map(|w| w * w).sum::<f64>()
    }

    pub(crate) fn to_f32(&self) -> Vec<f32> {
        self.v.iter().map(|w| (w * self.scale) as f32).collect()
    }
}
