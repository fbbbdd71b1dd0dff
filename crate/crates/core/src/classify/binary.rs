use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{featurize_text, SparseVector, DEFAULT_FEATURE_DIM};
use super::{
    check_feature_dim, decode_weights, encode_weights, strip_header, ClassifyError, ScaledWeights,
    TrainConfig, MODEL_VERSION_TAG,
};
use crate::corpus::LabeledExample;
use crate::quality::QualityAttribute;

/// Hashed bag-of-words logistic regressor for one quality.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel {
    pub quality: QualityAttribute,
    pub feature_dim: usize,
    pub weights: Vec<f32>,
    pub bias: f64,
    pub train_config: TrainConfig,
    pub version_tag: String,
}

#[derive(Serialize, Deserialize)]
struct BinaryModelFile {
    quality: QualityAttribute,
    feature_dim: usize,
    bias: f64,
    weights: String,
    train_config: TrainConfig,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl BinaryModel {
    /// All-zero model; scores every text at 0.5.
    pub fn zeros(quality: QualityAttribute, feature_dim: usize, train_config: TrainConfig) -> Self {
        BinaryModel {
            quality,
            feature_dim,
            weights: vec![0.0; feature_dim],
            bias: 0.0,
            train_config,
            version_tag: MODEL_VERSION_TAG.to_string(),
        }
    }

    pub fn logit(&self, x: &SparseVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    pub fn score(&self, text: &str) -> f64 {
        sigmoid(self.logit(&featurize_text(text, self.feature_dim)))
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<(), ClassifyError> {
        let file = BinaryModelFile {
            quality: self.quality,
            feature_dim: self.feature_dim,
            bias: self.bias,
            weights: encode_weights(&self.weights),
            train_config: self.train_config.clone(),
        };
        writer.write_all(MODEL_VERSION_TAG.as_bytes())?;
        writer.write_all(b"\n")?;
        serde_json::to_writer(&mut writer, &file).map_err(|e| ClassifyError::Format(e.to_string()))?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ClassifyError> {
        let json = strip_header(bytes, MODEL_VERSION_TAG)?;
        let file: BinaryModelFile =
            serde_json::from_slice(json).map_err(|e| ClassifyError::Format(e.to_string()))?;
        check_feature_dim(file.feature_dim)?;
        let weights = decode_weights(&file.weights)?;
        if weights.len() != file.feature_dim {
            return Err(ClassifyError::Format(format!(
                "expected {} weights, found {}",
                file.feature_dim,
                weights.len()
            )));
        }
        if !weights.iter().all(|w| w.is_finite()) || !file.bias.is_finite() {
            return Err(ClassifyError::Format("non-finite weight".into()));
        }
        Ok(BinaryModel {
            quality: file.quality,
            feature_dim: file.feature_dim,
            weights,
            bias: file.bias,
            train_config: file.train_config,
            version_tag: MODEL_VERSION_TAG.to_string(),
        })
    }

    pub fn read_from<R: Read>(mut reader: R) -> Result<Self, ClassifyError> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Score of `text` under `model`: sigmoid(w·x + b).
pub fn predict_score(model: &BinaryModel, text: &str) -> f64 {
    model.score(text)
}

pub fn train_binary(
    examples: &[LabeledExample],
    config: &TrainConfig,
) -> Result<BinaryModel, ClassifyError> {
    train_binary_with(examples, config, DEFAULT_FEATURE_DIM)
}

pub fn train_binary_with(
    examples: &[LabeledExample],
    config: &TrainConfig,
    feature_dim: usize,
) -> Result<BinaryModel, ClassifyError> {
    train_binary_traced(examples, config, feature_dim).map(|(m, _)| m)
}

fn logistic_loss(z: f64, y: f64) -> f64 {
    // log(1 + e^z) - y z, computed stably
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - y * z
}

/// Trains with mini-batch gradient descent on L2-regularized logistic loss.
///
/// The objective is `Σ_i loss_i(w) + (weight_decay / 2)·‖w‖²`. Each batch
/// step applies the summed per-example gradients scaled by the learning
/// rate, plus the batch's `|B|/N` share of the penalty gradient.
///
/// Also returns the objective measured after each epoch.
pub fn train_binary_traced(
    examples: &[LabeledExample],
    config: &TrainConfig,
    feature_dim: usize,
) -> Result<(BinaryModel, Vec<f64>), ClassifyError> {
    config.validate()?;
    check_feature_dim(feature_dim)?;
    let first = examples.first().ok_or(ClassifyError::EmptyTraining)?;
    let quality = first.quality;
    let positives = examples.iter().filter(|e| e.is_positive()).count();
    if positives == 0 || positives == examples.len() {
        return Err(ClassifyError::SingleClass(quality.to_string()));
    }

    let xs: Vec<SparseVector> = examples
        .iter()
        .map(|e| featurize_text(&e.text, feature_dim))
        .collect();
    let ys: Vec<f64> = examples.iter().map(|e| f64::from(e.label)).collect();

    let mut w = ScaledWeights::zeros(feature_dim);
    let mut bias = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let n = xs.len() as f64;
    let mut losses = Vec::with_capacity(config.epochs);
    let mut grad: Vec<(usize, f64)> = Vec::new();

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.clear();
            let mut bias_grad = 0.0;
            for &i in batch {
                let err = sigmoid(w.dot(&xs[i], 0) + bias) - ys[i];
                bias_grad += err;
                grad.extend(xs[i].iter().map(|(j, v)| (j, err * v)));
            }
            w.decay(1.0 - config.learning_rate * config.weight_decay * batch.len() as f64 / n);
            for &(j, g) in &grad {
                w.add(j, -config.learning_rate * g);
            }
            bias -= config.learning_rate * bias_grad;
        }
        let data_loss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, &y)| logistic_loss(w.dot(x, 0) + bias, y))
            .sum::<f64>();
        losses.push(data_loss + 0.5 * config.weight_decay * w.squared_norm());
    }

    let model = BinaryModel {
        quality,
        feature_dim,
        weights: w.to_f32(),
        bias,
        train_config: config.clone(),
        version_tag: MODEL_VERSION_TAG.to_string(),
    };
    Ok((model, losses))
}
