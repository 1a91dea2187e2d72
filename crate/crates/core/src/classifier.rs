//! Linear softmax head trained on latent features.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::linalg;
use crate::period;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureScheme {
    /// Filtered code at the last step.
    Final,
    /// Mean filtered code over the last half of the period.
    #[default]
    MeanLastHalf,
}

/// Reduces a per-step code trace to one feature vector.
pub fn extract_features(trace: &[Vec<f64>], scheme: FeatureScheme) -> Result<Vec<f64>> {
    let last = trace.last().ok_or_else(|| Error::invalid("empty code trace"))?;
    match scheme {
        FeatureScheme::Final => Ok(last.clone()),
        FeatureScheme::MeanLastHalf => {
            let tail = &trace[period::last_half_start(trace.len())..];
            let mut mean = vec![0.0; last.len()];
            for code in tail {
                for (m, v) in mean.iter_mut().zip(code) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= tail.len() as f64);
            Ok(mean)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    classes: usize,
    features: usize,
    /// `classes × features`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearClassifier {
    pub fn zeros(classes: usize, features: usize) -> Self {
        Self {
            classes,
            features,
            weights: vec![0.0; classes * features],
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|k| self.bias[k] + linalg::dot(&self.weights[k * self.features..(k + 1) * self.features], x))
            .collect()
    }

    /// Argmax of the class scores; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MODEL_MAGIC);
        for f in [MODEL_VERSION, self.classes as u32, self.features as u32] {
            b.extend_from_slice(&f.to_le_bytes());
        }
        for v in self.weights.iter().chain(&self.bias) {
            b.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MODEL_MAGIC {
            return Err(Error::format("bad classifier magic"));
        }
        let field = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
        if field(0) != MODEL_VERSION as usize {
            return Err(Error::format(format!("unsupported classifier version {}", field(0))));
        }
        let (classes, features) = (field(1), field(2));
        let expected = (classes * features + classes) * 4;
        let payload = &bytes[16..];
        if classes < 2 || payload.len() != expected {
            return Err(Error::format(format!(
                "classifier payload is {} bytes, header implies {expected}",
                payload.len()
            )));
        }
        let mut values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let bias = values.split_off(classes * features);
        Ok(Self {
            classes,
            features,
            weights: values,
            bias,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.context(path.display().to_string()))
    }
}

const MODEL_MAGIC: &[u8; 4] = b"LCLS";
const MODEL_VERSION: u32 = 1;

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn softmax_in_place(scores: &mut [f64]) {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - m).exp();
        z += *s;
    }
    scores.iter_mut().for_each(|s| *s /= z);
}

fn check_set(features: &[Vec<f64>], labels: &[usize]) -> Result<usize> {
    if features.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    if features.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let n = features[0].len();
    if features.iter().any(|f| f.len() != n) {
        return Err(Error::invalid("feature vectors differ in length"));
    }
    if features.iter().any(|f| !linalg::all_finite(f)) {
        return Err(Error::numeric("non-finite feature", 0));
    }
    Ok(n)
}

/// Mean cross-entropy of the model on a set.
pub fn loss(model: &LinearClassifier, features: &[Vec<f64>], labels: &[usize]) -> f64 {
    let total: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let mut p = model.scores(x);
            softmax_in_place(&mut p);
            -(p[y].max(1e-300)).ln()
        })
        .sum();
    total / features.len() as f64
}

/// Multinomial logistic regression by per-sample SGD. Returns the model and
/// the mean training loss after every epoch.
pub fn train_with_history(
    features: &[Vec<f64>],
    labels: &[usize],
    config: &TrainConfig,
) -> Result<(LinearClassifier, Vec<f64>)> {
    let n = check_set(features, labels)?;
    let classes = labels.iter().max().unwrap() + 1;
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::invalid("training data contains a single class"));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::invalid("classifier learning rate must be positive"));
    }
    let mut model = LinearClassifier::zeros(classes, n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let lr = config.learning_rate;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &features[i];
            let mut p = model.scores(x);
            softmax_in_place(&mut p);
            p[labels[i]] -= 1.0;
            for (k, g) in p.iter().enumerate() {
                linalg::axpy(-lr * g, x, &mut model.weights[k * n..(k + 1) * n]);
                model.bias[k] -= lr * g;
            }
        }
        history.push(loss(&model, features, labels));
    }
    if !linalg::all_finite(&model.weights) {
        return Err(Error::numeric("classifier weights diverged", config.epochs));
    }
    Ok((model, history))
}

pub fn train(features: &[Vec<f64>], labels: &[usize], config: &TrainConfig) -> Result<LinearClassifier> {
    train_with_history(features, labels, config).map(|(m, _)| m)
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn evaluate(model: &LinearClassifier, features: &[Vec<f64>], labels: &[usize], exec: Execution) -> Result<f64> {
    let n = check_set(features, labels)?;
    if n != model.features() {
        return Err(Error::invalid(format!(
            "features have length {n}, model expects {}",
            model.features()
        )));
    }
    let hits = exec::map(exec, features, |i, x| (model.predict(x) == labels[i]) as usize);
    Ok(hits.iter().sum::<usize>() as f64 / features.len() as f64)
}
