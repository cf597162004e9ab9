//! Single-layer softmax classifier trained full-batch with Adam on
//! cross-entropy.
//!
//! Parameters and all arithmetic are `f64`. Every reduction runs in a fixed
//! sequential order, so identical inputs give bit-identical trajectories.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{write_io, Error, Result};
use crate::matfile;

pub const INIT_RANGE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 100,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig("Adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Feature rows with their (pseudo-)labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    features: Array2<f64>,
    labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::InvalidConfig("training batch is empty".into()));
        }
        if features.nrows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.nrows(),
                right: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::IndexOutOfRange {
                what: "label",
                index: bad,
                bound: num_classes,
            });
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One bias-corrected Adam update of `params` in place. `step` is the 1-based
/// index of this update.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    config: &TrainConfig,
) {
    let TrainConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
        ..
    } = *config;
    let t = step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.mapv_inplace(|v| v / total);
    }
    out
}

/// Mean cross-entropy over rows and its gradient with respect to the logits,
/// `(softmax - onehot) / B`.
pub fn softmax_cross_entropy(
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>)> {
    let (rows, classes) = logits.dim();
    if rows != labels.len() {
        return Err(Error::LengthMismatch {
            left: rows,
            right: labels.len(),
        });
    }
    if rows == 0 {
        return Err(Error::InvalidConfig(
            "cross-entropy of an empty batch".into(),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::IndexOutOfRange {
            what: "label",
            index: bad,
            bound: classes,
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("logits contain NaN or Inf".into()));
    }

    let b = rows as f64;
    let mut grad = Array2::zeros((rows, classes));
    let mut loss = 0.0;
    for (r, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        loss += log_z - row[y];
        for c in 0..classes {
            let p = (row[c] - log_z).exp();
            grad[[r, c]] = (p - if c == y { 1.0 } else { 0.0 }) / b;
        }
    }
    Ok((loss / b, grad))
}

/// Index of the largest entry in each row; ties go to the lowest index.
pub fn argmax_rows(logits: ArrayView2<'_, f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    weights: Array2<f64>,
    bias: Array1<f64>,
    m_weights: Array2<f64>,
    v_weights: Array2<f64>,
    m_bias: Array1<f64>,
    v_bias: Array1<f64>,
    step_count: u64,
}

impl LinearClassifier {
    /// Weights uniform on [-0.01, 0.01] from a seeded ChaCha8 stream, zero
    /// bias and zero Adam moments.
    pub fn new(feature_dim: usize, num_classes: usize, rng_seed: u64) -> Result<Self> {
        if feature_dim < 1 {
            return Err(Error::InvalidConfig(
                "feature dimension must be >= 1".into(),
            ));
        }
        if num_classes < 2 {
            return Err(Error::InvalidConfig(
                "classifier needs at least two classes".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let weights = Array2::from_shape_simple_fn((num_classes, feature_dim), || {
            rng.random_range(-INIT_RANGE..=INIT_RANGE)
        });
        Ok(Self::from_parameters(weights, Array1::zeros(num_classes)))
    }

    /// Fresh optimizer state around the given parameters.
    pub fn from_parameters(weights: Array2<f64>, bias: Array1<f64>) -> Self {
        assert_eq!(weights.nrows(), bias.len(), "one bias per class");
        let shape = weights.raw_dim();
        let n = bias.len();
        Self {
            weights: weights.as_standard_layout().into_owned(),
            bias,
            m_weights: Array2::zeros(shape),
            v_weights: Array2::zeros(shape),
            m_bias: Array1::zeros(n),
            v_bias: Array1::zeros(n),
            step_count: 0,
        }
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }

    fn check_dim(&self, features: &ArrayView2<'_, f64>) -> Result<()> {
        if features.ncols() != self.feature_dim() {
            return Err(Error::DimensionMismatch(format!(
                "features have {} columns, classifier expects {}",
                features.ncols(),
                self.feature_dim()
            )));
        }
        Ok(())
    }

    /// `features * weights^T + bias`.
    pub fn forward(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_dim(&features)?;
        let (rows, n) = (features.nrows(), self.num_classes());
        let mut logits = Array2::zeros((rows, n));
        for (r, x) in features.rows().into_iter().enumerate() {
            for (c, w) in self.weights.rows().into_iter().enumerate() {
                let mut acc = 0.0;
                for (a, b) in x.iter().zip(w.iter()) {
                    acc += a * b;
                }
                logits[[r, c]] = acc + self.bias[c];
            }
        }
        Ok(logits)
    }

    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(self.forward(features)?.view()))
    }

    /// Loss and parameter gradients at the current parameters.
    pub fn gradients(&self, batch: &LabeledBatch) -> Result<Gradients> {
        if batch.labels().iter().any(|&y| y >= self.num_classes()) {
            return Err(Error::DimensionMismatch(
                "batch labels exceed the classifier's class count".into(),
            ));
        }
        let x = batch.features().view();
        let logits = self.forward(x)?;
        let (loss, grad_logits) = softmax_cross_entropy(logits.view(), batch.labels())?;
        let (n, d) = self.weights.dim();
        let mut gw = Array2::zeros((n, d));
        let mut gb = Array1::zeros(n);
        for (g_row, x_row) in grad_logits.rows().into_iter().zip(x.rows()) {
            for c in 0..n {
                let g = g_row[c];
                gb[c] += g;
                for (j, &xv) in x_row.iter().enumerate() {
                    gw[[c, j]] += g * xv;
                }
            }
        }
        Ok(Gradients {
            loss,
            weights: gw,
            bias: gb,
        })
    }

    /// Runs `config.epochs` full-batch Adam updates and returns the loss
    /// measured before each update.
    pub fn train(&mut self, batch: &LabeledBatch, config: &TrainConfig) -> Result<Vec<f64>> {
        config.validate()?;
        let mut trace = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            let grads = self.gradients(batch).map_err(|e| match e {
                Error::NonFiniteValue(msg) => Error::Divergence(format!("epoch {epoch}: {msg}")),
                other => other,
            })?;
            if !grads.loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "loss is {} at epoch {epoch}",
                    grads.loss
                )));
            }
            trace.push(grads.loss);
            self.step_count += 1;
            adam_update(
                self.weights.as_slice_mut().expect("standard layout"),
                grads.weights.as_slice().expect("standard layout"),
                self.m_weights.as_slice_mut().expect("standard layout"),
                self.v_weights.as_slice_mut().expect("standard layout"),
                self.step_count,
                config,
            );
            adam_update(
                self.bias.as_slice_mut().expect("contiguous"),
                grads.bias.as_slice().expect("contiguous"),
                self.m_bias.as_slice_mut().expect("contiguous"),
                self.v_bias.as_slice_mut().expect("contiguous"),
                self.step_count,
                config,
            );
            if self
                .weights
                .iter()
                .chain(self.bias.iter())
                .any(|v| !v.is_finite())
            {
                return Err(Error::Divergence(format!(
                    "non-finite parameter after epoch {epoch}"
                )));
            }
        }
        Ok(trace)
    }
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
const WEIGHTS_FILE: &str = "weights.emb";
const BIAS_FILE: &str = "bias.emb";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFiles {
    pub weights: String,
    pub bias: String,
}

/// JSON sidecar of a classifier checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub step_count: u64,
    pub files: CheckpointFiles,
    pub config: serde_json::Value,
}

/// Writes weights (N x d_f) and bias (1 x N) as `EMBSTOR1` float32 matrices
/// next to a `checkpoint.json` sidecar. Adam moments are not persisted.
pub fn save_checkpoint(
    clf: &LinearClassifier,
    dir: &Path,
    config: serde_json::Value,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| write_io(dir, e))?;
    let weights = clf.weights.mapv(|v| v as f32);
    let bias = clf.bias.mapv(|v| v as f32).insert_axis(ndarray::Axis(0));
    matfile::write_matrix(&dir.join(WEIGHTS_FILE), &weights)?;
    matfile::write_matrix(&dir.join(BIAS_FILE), &bias)?;
    let meta = CheckpointMeta {
        version: 1,
        feature_dim: clf.feature_dim(),
        num_classes: clf.num_classes(),
        step_count: clf.step_count,
        files: CheckpointFiles {
            weights: WEIGHTS_FILE.into(),
            bias: BIAS_FILE.into(),
        },
        config,
    };
    let path = dir.join(CHECKPOINT_FILE);
    let text = serde_json::to_string_pretty(&meta).expect("checkpoint meta serializes");
    fs::write(&path, text + "\n").map_err(|e| write_io(&path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<(LinearClassifier, CheckpointMeta)> {
    let path = dir.join(CHECKPOINT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::read_io(&path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| Error::InvalidFormat {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let weights = matfile::read_matrix(&dir.join(&meta.files.weights))?;
    let bias = matfile::read_matrix(&dir.join(&meta.files.bias))?;
    if weights.dim() != (meta.num_classes, meta.feature_dim) || bias.dim() != (1, meta.num_classes)
    {
        return Err(Error::DimensionMismatch(format!(
            "checkpoint matrices {:?} / {:?} disagree with sidecar {}x{}",
            weights.dim(),
            bias.dim(),
            meta.num_classes,
            meta.feature_dim
        )));
    }
    if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("checkpoint parameters".into()));
    }
    let mut clf =
        LinearClassifier::from_parameters(weights.mapv(f64::from), bias.row(0).mapv(f64::from));
    clf.step_count = meta.step_count;
    Ok((clf, meta))
}
