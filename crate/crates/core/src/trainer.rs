//! Linear multi-label classifier trained on frozen features.
//!
//! `scores = sigmoid(W·x + b)` with `W` of shape `L × d`. Training is
//! minibatch gradient descent (SGD or Adam) from a zero initialization; the
//! per-batch gradient is the mean of per-image loss gradients. Batches are
//! drawn from a ChaCha8 shuffle seeded by `shuffle_seed`, so a run is fully
//! determined by its inputs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::ingest::FeatureMatrix;
use crate::losses::{self, sigmoid, LossError, LossSpec};
use crate::metrics::{self, MapSummary, MetricError};
use crate::sampler::SpmlRealization;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("image {0} has an observation but no feature row")]
    MissingFeatures(u64),
    #[error("image {image_id}: observed category {category} out of range for {num_labels} labels")]
    CategoryOutOfRange { image_id: u64, category: usize, num_labels: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, epochs: 25, batch_size: 16, optimizer: Optimizer::adam(), shuffle_seed: 0 }
    }
}

impl TrainConfig {
    fn validate(&self, n: usize) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be > 0".into()));
        }
        if self.batch_size > n {
            return Err(TrainError::Config(format!("batch size {} exceeds {n} training images", self.batch_size)));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                return Err(TrainError::Config("adam needs beta1, beta2 in [0, 1) and eps > 0".into()));
            }
        }
        Ok(())
    }
}

/// `L × d` weights (row-major) plus a length-`L` bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    num_labels: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

// Field order is the sorted key order of the canonical file.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(rename = "L")]
    num_labels: usize,
    #[serde(rename = "W")]
    weights: Vec<Vec<f64>>,
    b: Vec<f64>,
    d: usize,
}

impl LinearModel {
    pub fn zeros(num_labels: usize, dim: usize) -> Self {
        Self { num_labels, dim, weights: vec![0.0; num_labels * dim], bias: vec![0.0; num_labels] }
    }

    pub fn from_parts(num_labels: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self, TrainError> {
        if weights.len() != num_labels * dim || bias.len() != num_labels {
            return Err(TrainError::Dimension(format!(
                "expected {num_labels}×{dim} weights and {num_labels} biases, got {} and {}",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(TrainError::Dimension("model has non-finite parameters".into()));
        }
        Ok(Self { num_labels, dim, weights, bias })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Pre-sigmoid outputs for one feature row.
    pub fn logits(&self, x: &[f32]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        if self.dim == 0 {
            return self.bias.clone();
        }
        self.weights
            .chunks_exact(self.dim)
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).map(|(wi, &xi)| wi * f64::from(xi)).sum::<f64>() + b)
            .collect()
    }

    /// Canonical JSON `{"L": .., "W": [[..]], "b": [..], "d": ..}`.
    pub fn to_json(&self) -> Vec<u8> {
        let weights = if self.dim == 0 {
            vec![Vec::new(); self.num_labels]
        } else {
            self.weights.chunks(self.dim).map(<[f64]>::to_vec).collect()
        };
        let file = ModelFile { num_labels: self.num_labels, weights, b: self.bias.clone(), d: self.dim };
        let mut out = serde_json::to_vec(&file).expect("model serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, TrainError> {
        let file: ModelFile = serde_json::from_slice(bytes).map_err(|e| TrainError::Dimension(format!("bad model file: {e}")))?;
        if file.weights.len() != file.num_labels || file.weights.iter().any(|r| r.len() != file.d) {
            return Err(TrainError::Dimension("W does not match L × d".into()));
        }
        let weights = file.weights.into_iter().flatten().collect();
        Self::from_parts(file.num_labels, file.d, weights, file.b)
    }
}

/// `N × L` sigmoid scores, rows aligned with `image_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub image_ids: Vec<u64>,
    pub num_labels: usize,
    pub values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.num_labels..(r + 1) * self.num_labels]
    }
}

pub fn predict(model: &LinearModel, features: &FeatureMatrix) -> Result<ScoreMatrix, TrainError> {
    if features.dim() != model.dim {
        return Err(TrainError::Dimension(format!("features have dim {}, model expects {}", features.dim(), model.dim)));
    }
    let mut values = Vec::with_capacity(features.len() * model.num_labels);
    for r in 0..features.len() {
        values.extend(model.logits(features.row(r)).into_iter().map(sigmoid));
    }
    Ok(ScoreMatrix { image_ids: features.image_ids().to_vec(), num_labels: model.num_labels, values })
}

/// MAP of `model` on the images of `dataset` (full labels).
pub fn evaluate(model: &LinearModel, features: &FeatureMatrix, dataset: &Dataset) -> Result<MapSummary, TrainError> {
    if features.dim() != model.dim || dataset.num_labels() != model.num_labels {
        return Err(TrainError::Dimension(format!(
            "model is {}×{}, data is {}×{}",
            model.num_labels,
            model.dim,
            dataset.num_labels(),
            features.dim()
        )));
    }
    let l = model.num_labels;
    let mut scores = Vec::with_capacity(dataset.images().len() * l);
    let mut labels = Vec::with_capacity(dataset.images().len() * l);
    for image in dataset.images() {
        let x = features.features_of(image.image_id()).ok_or(TrainError::MissingFeatures(image.image_id()))?;
        scores.extend(model.logits(x).into_iter().map(sigmoid));
        labels.extend_from_slice(image.labels());
    }
    Ok(metrics::mean_average_precision(&scores, &labels, l)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_map: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainLog {
    /// Mean training loss of the zero-initialized model.
    pub initial_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) of the returned snapshot when validation was used.
    pub best_epoch: Option<usize>,
}

/// Held-out data for epoch snapshot selection.
pub struct Validation<'a> {
    pub features: &'a FeatureMatrix,
    pub dataset: &'a Dataset,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// Applies one optimizer step to `params[range]` with gradient `grad`.
fn step(opt: &Optimizer, lr: f64, t: i32, params: &mut [f64], grad: &[f64], state: Option<(&mut [f64], &mut [f64])>) {
    match (*opt, state) {
        (Optimizer::Adam { beta1, beta2, eps }, Some((m, v))) => {
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for i in 0..params.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
        _ => {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= lr * g;
            }
        }
    }
}

struct Example {
    row: usize,
    observed: usize,
}

fn example_loss(
    spec: &LossSpec,
    f: &[f64],
    observed: usize,
    estimate: Option<&[f64]>,
) -> Result<(f64, Vec<f64>, Option<Vec<f64>>), LossError> {
    Ok(match *spec {
        LossSpec::An => {
            let o = losses::loss_an(f, observed)?;
            (o.loss, o.grad, None)
        }
        LossSpec::AnLs { epsilon } => {
            let o = losses::loss_an_ls(f, observed, epsilon)?;
            (o.loss, o.grad, None)
        }
        LossSpec::Em { alpha } => {
            let o = losses::loss_em(f, observed, alpha)?;
            (o.loss, o.grad, None)
        }
        LossSpec::Role { k, lambda } => {
            let est = estimate.expect("ROLE needs an estimate row");
            let o = losses::loss_role(f, est, observed, k, lambda)?;
            (o.loss, o.grad_logits, Some(o.grad_estimator_logits))
        }
    })
}

/// Trains a linear model on the observed positives of `realization`.
///
/// Training images are the realization's images in ascending id order.
/// With `validation`, the returned model is the epoch snapshot with the
/// highest validation MAP (earliest on ties); otherwise the final model.
pub fn train(
    features: &FeatureMatrix,
    realization: &SpmlRealization,
    num_labels: usize,
    loss: &LossSpec,
    cfg: &TrainConfig,
    validation: Option<Validation<'_>>,
) -> Result<(LinearModel, TrainLog), TrainError> {
    loss.validate()?;
    let d = features.dim();
    let l = num_labels;
    if l == 0 {
        return Err(TrainError::Config("need at least one label".into()));
    }

    let mut examples = Vec::with_capacity(realization.len());
    for (&image_id, &observed) in &realization.observations {
        let row = features.row_of(image_id).ok_or(TrainError::MissingFeatures(image_id))?;
        if observed >= l {
            return Err(TrainError::CategoryOutOfRange { image_id, category: observed, num_labels: l });
        }
        examples.push(Example { row, observed });
    }
    let n = examples.len();
    cfg.validate(n)?;
    if let Some(v) = &validation {
        if v.features.dim() != d || v.dataset.num_labels() != l {
            return Err(TrainError::Dimension("validation data does not match training dimensions".into()));
        }
    }

    let mut model = LinearModel::zeros(l, d);
    let is_role = matches!(loss, LossSpec::Role { .. });
    // ROLE label estimator: logits start at 0, i.e. estimates of 0.5.
    let mut est_logits = if is_role { vec![0.0; n * l] } else { Vec::new() };

    let adam = matches!(cfg.optimizer, Optimizer::Adam { .. });
    let mut w_state = AdamState::new(if adam { l * d } else { 0 });
    let mut b_state = AdamState::new(if adam { l } else { 0 });
    let mut e_state = AdamState::new(if adam { est_logits.len() } else { 0 });

    let mut log = TrainLog::default();
    log.initial_loss = {
        let mut total = 0.0;
        for (i, ex) in examples.iter().enumerate() {
            let f: Vec<f64> = model.logits(features.row(ex.row)).into_iter().map(sigmoid).collect();
            let est: Option<Vec<f64>> = is_role.then(|| est_logits[i * l..(i + 1) * l].iter().map(|&z| sigmoid(z)).collect());
            total += example_loss(loss, &f, ex.observed, est.as_deref())?.0;
        }
        total / n as f64
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, usize, LinearModel)> = None;
    let mut t = 0i32;

    let mut grad_w = vec![0.0; l * d];
    let mut grad_b = vec![0.0; l];

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            let mut est_grads: Vec<(usize, Vec<f64>)> = Vec::new();

            for &i in batch {
                let ex = &examples[i];
                let x = features.row(ex.row);
                let f: Vec<f64> = model.logits(x).into_iter().map(sigmoid).collect();
                let est: Option<Vec<f64>> =
                    is_role.then(|| est_logits[i * l..(i + 1) * l].iter().map(|&z| sigmoid(z)).collect());
                let (value, g, g_est) = example_loss(loss, &f, ex.observed, est.as_deref())?;
                batch_loss += value;
                for (c, gc) in g.iter().enumerate() {
                    let gc = gc * scale;
                    grad_b[c] += gc;
                    for (gw, &xj) in grad_w[c * d..(c + 1) * d].iter_mut().zip(x) {
                        *gw += gc * f64::from(xj);
                    }
                }
                if let Some(ge) = g_est {
                    est_grads.push((i, ge.into_iter().map(|v| v * scale).collect()));
                }
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::Divergence { epoch, batch: batch_idx });
            }
            epoch_loss += batch_loss;

            t = t.saturating_add(1);
            let opt = &cfg.optimizer;
            let lr = cfg.learning_rate;
            step(opt, lr, t, &mut model.weights, &grad_w, adam.then_some((&mut w_state.m[..], &mut w_state.v[..])));
            step(opt, lr, t, &mut model.bias, &grad_b, adam.then_some((&mut b_state.m[..], &mut b_state.v[..])));
            for (i, ge) in est_grads {
                let range = i * l..(i + 1) * l;
                let state = adam.then(|| (&mut e_state.m[range.clone()], &mut e_state.v[range.clone()]));
                step(opt, lr, t, &mut est_logits[range.clone()], &ge, state);
            }
            if model.weights.iter().chain(&model.bias).any(|v| !v.is_finite()) {
                return Err(TrainError::Divergence { epoch, batch: batch_idx });
            }
        }

        let val_map = match &validation {
            Some(v) => Some(evaluate(&model, v.features, v.dataset)?.map),
            None => None,
        };
        if let Some(m) = val_map {
            if best.as_ref().is_none_or(|(b, _, _)| m > *b) {
                best = Some((m, epoch, model.clone()));
            }
        }
        let mean_loss = epoch_loss / n as f64;
        log::debug!("epoch {epoch}: loss {mean_loss:.6} val_map {val_map:?}");
        log.epochs.push(EpochRecord { epoch, mean_loss, val_map });
    }

    if let Some((_, epoch, snapshot)) = best {
        log.best_epoch = Some(epoch);
        return Ok((snapshot, log));
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::bias::BiasKind;
    use crate::sampler::BiasDescriptor;
    use rand::Rng;

    fn realization(obs: &[(u64, usize)]) -> SpmlRealization {
        SpmlRealization {
            bias: BiasDescriptor { kind: BiasKind::Uniform, epsilon: None },
            seed: 0,
            observations: obs.iter().copied().collect::<BTreeMap<_, _>>(),
        }
    }

    fn toy() -> (FeatureMatrix, SpmlRealization) {
        let f = FeatureMatrix::new(vec![1, 2, 3, 4], 2, vec![1.0, 0.0, 0.0, 1.0, 0.9, 0.1, 0.2, 0.8]).unwrap();
        (f, realization(&[(1, 0), (2, 1), (3, 0), (4, 1)]))
    }

    #[test]
    fn zero_epochs_returns_zero_model() {
        let (f, r) = toy();
        let cfg = TrainConfig { epochs: 0, batch_size: 2, ..Default::default() };
        let (m, log) = train(&f, &r, 2, &LossSpec::An, &cfg, None).unwrap();
        assert_eq!(m, LinearModel::zeros(2, 2));
        assert!(log.epochs.is_empty());
    }

    #[test]
    fn deterministic_runs() {
        let (f, r) = toy();
        let cfg = TrainConfig { epochs: 5, batch_size: 3, shuffle_seed: 9, ..Default::default() };
        for loss in [LossSpec::An, LossSpec::role(1.0, 1.0).unwrap(), LossSpec::em(0.1).unwrap()] {
            let a = train(&f, &r, 2, &loss, &cfg, None).unwrap().0;
            let b = train(&f, &r, 2, &loss, &cfg, None).unwrap().0;
            assert_eq!(a.to_json(), b.to_json());
        }
    }

    #[test]
    fn single_sgd_step_matches_loss_gradient() {
        let f = FeatureMatrix::new(vec![8], 3, vec![0.5, -1.0, 2.0]).unwrap();
        let r = realization(&[(8, 1)]);
        let cfg = TrainConfig { epochs: 1, batch_size: 1, learning_rate: 0.1, optimizer: Optimizer::Sgd, shuffle_seed: 0 };
        let (m, _) = train(&f, &r, 2, &LossSpec::An, &cfg, None).unwrap();
        let g = losses::loss_an(&[0.5, 0.5], 1).unwrap().grad;
        let x = [0.5, -1.0, 2.0];
        for c in 0..2 {
            for j in 0..3 {
                assert_eq!(m.weights()[c * 3 + j], 0.0 - 0.1 * (g[c] * x[j]));
            }
            assert_eq!(m.bias()[c], 0.0 - 0.1 * g[c]);
        }
    }

    #[test]
    fn predict_examples() {
        let f = FeatureMatrix::new(vec![1, 2], 2, vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let zero = predict(&LinearModel::zeros(3, 2), &f).unwrap();
        assert!(zero.values.iter().all(|&s| s == 0.5));

        let m = LinearModel::from_parts(2, 2, vec![0.5, -0.25, 1.0, 1.0], vec![0.1, 50.0]).unwrap();
        let s = predict(&m, &f).unwrap();
        let scalar = |z: f64| 1.0 / (1.0 + (-z).exp());
        let want = [scalar(0.5 - 0.5 + 0.1), scalar(1.0 + 2.0 + 50.0), scalar(-0.5 - 0.125 + 0.1), scalar(-1.0 + 0.5 + 50.0)];
        for (a, b) in s.values.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((s.row(0)[1] - 1.0).abs() < 1e-9);
        assert!(predict(&m, &FeatureMatrix::new(vec![1], 3, vec![0.0; 3]).unwrap()).is_err());
    }

    #[test]
    fn config_and_id_errors() {
        let (f, r) = toy();
        let big = TrainConfig { batch_size: 5, ..Default::default() };
        assert!(matches!(train(&f, &r, 2, &LossSpec::An, &big, None), Err(TrainError::Config(_))));
        let missing = realization(&[(99, 0)]);
        let cfg = TrainConfig { batch_size: 1, ..Default::default() };
        assert_eq!(train(&f, &missing, 2, &LossSpec::An, &cfg, None).unwrap_err(), TrainError::MissingFeatures(99));
        let out_of_range = realization(&[(1, 5)]);
        assert!(matches!(
            train(&f, &out_of_range, 2, &LossSpec::An, &cfg, None),
            Err(TrainError::CategoryOutOfRange { .. })
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let f = FeatureMatrix::new(vec![1, 2], 1, vec![3.0e38, -3.0e38]).unwrap();
        let r = realization(&[(1, 0), (2, 1)]);
        let cfg = TrainConfig { epochs: 3, batch_size: 2, learning_rate: 1e300, optimizer: Optimizer::Sgd, shuffle_seed: 0 };
        assert!(matches!(train(&f, &r, 2, &LossSpec::An, &cfg, None), Err(TrainError::Divergence { .. })));
    }

    #[test]
    fn model_json_round_trip() {
        let m = LinearModel::from_parts(2, 3, vec![0.1, -2.5, 1e-20, 3.0, 0.0, 7.25], vec![0.5, -0.5]).unwrap();
        let bytes = m.to_json();
        let text = std::str::from_utf8(&bytes).unwrap();
        assert!(text.starts_with("{\"L\":2,\"W\":[[0.1,-2.5,1e-20],[3.0,0.0,7.25]],\"b\":[0.5,-0.5],\"d\":3}"));
        assert_eq!(LinearModel::from_json(&bytes).unwrap(), m);
        assert!(LinearModel::from_json(br#"{"L":1,"W":[[1.0]],"b":[0.0],"d":2}"#).is_err());
    }

    #[test]
    fn model_json_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w: Vec<f64> = (0..400).map(|_| rng.random::<f64>() * 0.2 - 0.1).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
        let m = LinearModel::from_parts(4, 100, w, b).unwrap();
        let back = LinearModel::from_json(&m.to_json()).unwrap();
        assert!(back.weights().iter().zip(m.weights()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(back, m);
    }
}
