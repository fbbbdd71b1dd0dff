use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{featurize_text, SparseVector, DEFAULT_FEATURE_DIM};
use super::{
    check_feature_dim, decode_weights, encode_weights, strip_header, ClassifyError, ScaledWeights,
    TrainConfig, MULTICLASS_VERSION_TAG,
};
use crate::quality::{QualityAttribute, QualitySet, QUALITY_COUNT};

/// Softmax regressor over the seven qualities. Rows follow canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassModel {
    pub feature_dim: usize,
    /// Row-major `7 × feature_dim`.
    pub weights: Vec<f32>,
    pub biases: [f64; QUALITY_COUNT],
    /// Classes absent from training carry weight 1.0; they never enter the
    /// loss.
    pub class_weights: [f64; QUALITY_COUNT],
    pub train_config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct MulticlassFile {
    feature_dim: usize,
    biases: Vec<f64>,
    class_weights: Vec<f64>,
    weights: String,
    train_config: TrainConfig,
}

/// Balanced class weights `N / (K · n_c)` over the classes in `counts`.
pub fn class_weights(
    counts: &BTreeMap<QualityAttribute, usize>,
) -> Result<BTreeMap<QualityAttribute, f64>, ClassifyError> {
    if let Some((&q, _)) = counts.iter().find(|(_, &n)| n == 0) {
        return Err(ClassifyError::ZeroCount(q));
    }
    let total: usize = counts.values().sum();
    let k = counts.len() as f64;
    Ok(counts
        .iter()
        .map(|(&q, &n)| (q, total as f64 / (k * n as f64)))
        .collect())
}

/// Single training label for an issue carrying several qualities: the
/// first in canonical order.
pub fn multiclass_label(qualities: QualitySet) -> Option<QualityAttribute> {
    qualities.first()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn argmax(probs: &[f64]) -> usize {
    // strict comparison keeps the canonical-first entry on ties
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

impl MulticlassModel {
    pub fn zeros(feature_dim: usize, train_config: TrainConfig) -> Self {
        MulticlassModel {
            feature_dim,
            weights: vec![0.0; QUALITY_COUNT * feature_dim],
            biases: [0.0; QUALITY_COUNT],
            class_weights: [1.0; QUALITY_COUNT],
            train_config,
        }
    }

    pub fn logits(&self, x: &SparseVector) -> [f64; QUALITY_COUNT] {
        let mut out = self.biases;
        for (c, z) in out.iter_mut().enumerate() {
            let row = &self.weights[c * self.feature_dim..(c + 1) * self.feature_dim];
            *z += x.dot(row);
        }
        out
    }

    pub fn predict(&self, text: &str) -> (QualityAttribute, [f64; QUALITY_COUNT]) {
        let probs = softmax(&self.logits(&featurize_text(text, self.feature_dim)));
        let mut out = [0.0; QUALITY_COUNT];
        out.copy_from_slice(&probs);
        (QualityAttribute::ALL[argmax(&out)], out)
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<(), ClassifyError> {
        let file = MulticlassFile {
            feature_dim: self.feature_dim,
            biases: self.biases.to_vec(),
            class_weights: self.class_weights.to_vec(),
            weights: encode_weights(&self.weights),
            train_config: self.train_config.clone(),
        };
        writer.write_all(MULTICLASS_VERSION_TAG.as_bytes())?;
        writer.write_all(b"\n")?;
        serde_json::to_writer(&mut writer, &file).map_err(|e| ClassifyError::Format(e.to_string()))?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut reader: R) -> Result<Self, ClassifyError> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        let json = strip_header(&bytes, MULTICLASS_VERSION_TAG)?;
        let file: MulticlassFile =
            serde_json::from_slice(json).map_err(|e| ClassifyError::Format(e.to_string()))?;
        check_feature_dim(file.feature_dim)?;
        let weights = decode_weights(&file.weights)?;
        if weights.len() != QUALITY_COUNT * file.feature_dim {
            return Err(ClassifyError::Format("weight matrix has the wrong size".into()));
        }
        let to_array = |v: Vec<f64>, what: &str| -> Result<[f64; QUALITY_COUNT], ClassifyError> {
            v.try_into()
                .map_err(|_| ClassifyError::Format(format!("{what} must have 7 entries")))
        };
        Ok(MulticlassModel {
            feature_dim: file.feature_dim,
            weights,
            biases: to_array(file.biases, "biases")?,
            class_weights: to_array(file.class_weights, "class_weights")?,
            train_config: file.train_config,
        })
    }
}

pub fn predict_multiclass(
    model: &MulticlassModel,
    text: &str,
) -> (QualityAttribute, [f64; QUALITY_COUNT]) {
    model.predict(text)
}

/// Trains over the classes present in `examples` (at least two).
pub fn train_multiclass(
    examples: &[(String, QualityAttribute)],
    config: &TrainConfig,
) -> Result<MulticlassModel, ClassifyError> {
    let present: QualitySet = examples.iter().map(|(_, q)| *q).collect();
    if examples.is_empty() {
        return Err(ClassifyError::EmptyTraining);
    }
    if present.len() < 2 {
        return Err(ClassifyError::SingleClass(
            present.first().map(|q| q.to_string()).unwrap_or_default(),
        ));
    }
    train_multiclass_for(examples, present, config, DEFAULT_FEATURE_DIM)
}

/// Trains over exactly `classes`; every requested class needs examples.
///
/// Same optimizer as the binary model, with the per-example loss scaled by
/// its class weight.
pub fn train_multiclass_for(
    examples: &[(String, QualityAttribute)],
    classes: QualitySet,
    config: &TrainConfig,
    feature_dim: usize,
) -> Result<MulticlassModel, ClassifyError> {
    config.validate()?;
    check_feature_dim(feature_dim)?;
    if examples.is_empty() {
        return Err(ClassifyError::EmptyTraining);
    }
    let mut counts: BTreeMap<QualityAttribute, usize> = classes.iter().map(|q| (q, 0)).collect();
    for (_, q) in examples {
        match counts.get_mut(q) {
            Some(n) => *n += 1,
            None => {
                return Err(ClassifyError::InvalidConfig(format!(
                    "example labelled '{q}' outside the requested classes"
                )))
            }
        }
    }
    if let Some((&q, _)) = counts.iter().find(|(_, &n)| n == 0) {
        return Err(ClassifyError::MissingClass(q));
    }
    if counts.len() < 2 {
        return Err(ClassifyError::SingleClass(classes.to_string()));
    }
    let weights_by_class = class_weights(&counts)?;
    let mut cw = [1.0; QUALITY_COUNT];
    for (q, w) in &weights_by_class {
        cw[q.index()] = *w;
    }

    let xs: Vec<SparseVector> = examples
        .iter()
        .map(|(t, _)| featurize_text(t, feature_dim))
        .collect();
    let ys: Vec<usize> = examples.iter().map(|(_, q)| q.index()).collect();

    let mut w = ScaledWeights::zeros(QUALITY_COUNT * feature_dim);
    let mut biases = [0.0; QUALITY_COUNT];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let n = xs.len() as f64;
    let mut grad: Vec<(usize, f64)> = Vec::new();

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let step = config.learning_rate;
            grad.clear();
            let mut bias_grad = [0.0; QUALITY_COUNT];
            for &i in batch {
                let x = &xs[i];
                let logits: Vec<f64> = (0..QUALITY_COUNT)
                    .map(|c| w.dot(x, c * feature_dim) + biases[c])
                    .collect();
                let probs = softmax(&logits);
                let weight = cw[ys[i]];
                for (c, p) in probs.iter().enumerate() {
                    let err = weight * (p - (c == ys[i]) as u8 as f64);
                    bias_grad[c] += err;
                    grad.extend(x.iter().map(|(j, v)| (c * feature_dim + j, err * v)));
                }
            }
            w.decay(1.0 - step * config.weight_decay * batch.len() as f64 / n);
            for &(j, g) in &grad {
                w.add(j, -step * g);
            }
            for (b, g) in biases.iter_mut().zip(bias_grad) {
                *b -= step * g;
            }
        }
    }

    Ok(MulticlassModel {
        feature_dim,
        weights: w.to_f32(),
        biases,
        class_weights: cw,
        train_config: config.clone(),
    })
}
