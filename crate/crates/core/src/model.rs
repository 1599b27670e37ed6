//! The function approximator mapping a feature vector to a scalar MOS
//! estimate: a linear regressor or a small MLP with hand-rolled backprop,
//! plus SGD/Adam and the supervised training loop.
//!
//! Training checkpoints on development-set SRCC at utterance level: the
//! parameters kept are those of the epoch with the best dev SRCC, and the
//! loop stops after `patience` epochs without improvement. Given a seed, the
//! whole procedure is deterministic.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{group_by_system, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{both_level_reports, MetricReport};
use crate::numeric;
use crate::rankloss::{ComparisonCache, LossConfig};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Linear,
    Mlp,
}

/// Hidden-layer nonlinearity; the output is always the identity, so
/// predictions are unbounded reals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }
}

/// Feed-forward regressor with dense layers and a scalar identity output.
///
/// Weights are row-major `(out_dim, in_dim)` per layer. `version` counts
/// parameter updates so activation traces can detect staleness.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    architecture: Architecture,
    layer_sizes: Vec<usize>,
    activation: Activation,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    seed: u64,
    version: u64,
}

/// Activations captured by a forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    version: u64,
    /// Input batch, one feature vector per sample.
    inputs: Vec<Vec<f64>>,
    /// Post-activation outputs per layer per sample (before dropout).
    activations: Vec<Vec<Vec<f64>>>,
    /// Inverted dropout factors per hidden layer per sample; empty when
    /// dropout is off.
    masks: Vec<Vec<Vec<f64>>>,
}

/// Parameter gradients, mirroring the model's weight/bias shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Initializes a regressor: weights drawn N(0, 2/fan_in), biases zero.
///
/// `layer_sizes` runs input dimension first, output (always 1) last; the
/// linear architecture requires exactly `[d, 1]`.
pub fn init_regressor(
    architecture: Architecture,
    layer_sizes: &[usize],
    activation: Activation,
    seed: u64,
) -> Result<Regressor> {
    let shape_err = |msg: String| Error::InvalidConfig {
        field: "model.layer_sizes".into(),
        msg,
    };
    if layer_sizes.len() < 2 {
        return Err(shape_err(format!(
            "need at least [input, 1], got {layer_sizes:?}"
        )));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(shape_err(format!("sizes must be positive, got {layer_sizes:?}")));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(shape_err(format!(
            "output dimension must be 1, got {layer_sizes:?}"
        )));
    }
    if architecture == Architecture::Linear && layer_sizes.len() != 2 {
        return Err(shape_err(format!(
            "linear architecture requires exactly [d, 1], got {layer_sizes:?}"
        )));
    }

    let mut rng = substream(seed, "init");
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    for l in 0..layer_sizes.len() - 1 {
        let fan_in = layer_sizes[l];
        let fan_out = layer_sizes[l + 1];
        let scale = (2.0 / fan_in as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| unit.sample(&mut rng) * scale)
            .collect();
        weights.push(w);
        biases.push(vec![0.0; fan_out]);
    }
    Ok(Regressor {
        architecture,
        layer_sizes: layer_sizes.to_vec(),
        activation,
        weights,
        biases,
        seed,
        version: 0,
    })
}

impl Regressor {
    /// Rebuilds a regressor from explicit parameters (checkpoint loading,
    /// tests with pinned weights).
    pub fn from_parts(
        architecture: Architecture,
        layer_sizes: Vec<usize>,
        activation: Activation,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        seed: u64,
    ) -> Result<Regressor> {
        let model = Regressor {
            architecture,
            layer_sizes,
            activation,
            weights,
            biases,
            seed,
            version: 0,
        };
        for l in 0..model.num_layers() {
            let (fan_in, fan_out) = (model.layer_sizes[l], model.layer_sizes[l + 1]);
            if model.weights[l].len() != fan_in * fan_out || model.biases[l].len() != fan_out {
                return Err(Error::Checkpoint(format!(
                    "layer {l} parameters do not match sizes {:?}",
                    model.layer_sizes
                )));
            }
        }
        Ok(model)
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// All parameters as one flat vector: per layer, weights row-major then
    /// biases. This is the checkpoint layout.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..self.num_layers() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    /// Overwrites all parameters from the flat layout; bumps the version.
    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut offset = 0;
        for l in 0..self.num_layers() {
            let wlen = self.weights[l].len();
            self.weights[l].copy_from_slice(&params[offset..offset + wlen]);
            offset += wlen;
            let blen = self.biases[l].len();
            self.biases[l].copy_from_slice(&params[offset..offset + blen]);
            offset += blen;
        }
        self.version += 1;
        Ok(())
    }

    fn check_input_dim(&self, dim: usize) -> Result<()> {
        if dim != self.input_dim() {
            return Err(Error::DimensionMismatch {
                id: "input".into(),
                expected: self.input_dim(),
                got: dim,
            });
        }
        Ok(())
    }

    /// Prediction for a single feature vector.
    pub fn forward_one(&self, features: &[f64]) -> Result<f64> {
        self.check_input_dim(features.len())?;
        let mut current = features.to_vec();
        for l in 0..self.num_layers() {
            current = self.layer_forward(l, &current, true);
        }
        Ok(current[0])
    }

    fn layer_forward(&self, layer: usize, input: &[f64], activate: bool) -> Vec<f64> {
        let fan_in = self.layer_sizes[layer];
        let fan_out = self.layer_sizes[layer + 1];
        let w = &self.weights[layer];
        let b = &self.biases[layer];
        let is_output = layer == self.num_layers() - 1;
        (0..fan_out)
            .map(|o| {
                let mut z = b[o];
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (wi, xi) in row.iter().zip(input) {
                    z += wi * xi;
                }
                if activate && !is_output {
                    self.activation.apply(z)
                } else {
                    z
                }
            })
            .collect()
    }
}

/// Batched forward pass, recording activations for [`backward`].
///
/// `dropout` (probability of zeroing a hidden unit, inverted scaling) only
/// applies when an RNG is supplied; inference passes use `forward` instead.
pub fn forward_train(
    model: &Regressor,
    batch: &[&[f64]],
    dropout: f64,
    dropout_rng: Option<&mut rand_chacha::ChaCha12Rng>,
) -> Result<(Vec<f64>, Trace)> {
    for row in batch {
        model.check_input_dim(row.len())?;
    }
    let layers = model.num_layers();
    let use_dropout = dropout > 0.0 && dropout_rng.is_some() && layers > 1;
    let keep = 1.0 - dropout;
    let mut rng = dropout_rng;

    let mut activations: Vec<Vec<Vec<f64>>> = Vec::with_capacity(layers);
    let mut masks: Vec<Vec<Vec<f64>>> = Vec::new();
    let inputs: Vec<Vec<f64>> = batch.iter().map(|r| r.to_vec()).collect();

    let mut current: Vec<Vec<f64>> = inputs.clone();
    for l in 0..layers {
        let outs: Vec<Vec<f64>> = current
            .iter()
            .map(|x| model.layer_forward(l, x, true))
            .collect();
        let is_hidden = l < layers - 1;
        if use_dropout && is_hidden {
            let rng = rng.as_mut().expect("dropout rng");
            let layer_masks: Vec<Vec<f64>> = outs
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|_| {
                            if rng.random_range(0.0..1.0) < dropout {
                                0.0
                            } else {
                                1.0 / keep
                            }
                        })
                        .collect()
                })
                .collect();
            current = outs
                .iter()
                .zip(&layer_masks)
                .map(|(row, m)| row.iter().zip(m).map(|(v, f)| v * f).collect())
                .collect();
            masks.push(layer_masks);
        } else {
            current = outs.clone();
        }
        activations.push(outs);
    }

    let preds = current.iter().map(|row| row[0]).collect();
    Ok((
        preds,
        Trace {
            version: model.version,
            inputs,
            activations,
            masks,
        },
    ))
}

/// Forward pass without gradient bookkeeping.
pub fn forward(model: &Regressor, batch: &[&[f64]]) -> Result<Vec<f64>> {
    batch.iter().map(|row| model.forward_one(row)).collect()
}

/// Backpropagates `loss_grad` (dLoss/dPrediction per sample) through the
/// recorded trace, returning gradients of the total loss with respect to all
/// parameters.
pub fn backward(model: &Regressor, trace: &Trace, loss_grad: &[f64]) -> Result<Gradients> {
    if trace.version != model.version {
        return Err(Error::StaleTrace);
    }
    let n = trace.inputs.len();
    if loss_grad.len() != n {
        return Err(Error::LengthMismatch {
            left: loss_grad.len(),
            right: n,
        });
    }
    let layers = model.num_layers();
    let mut grads = Gradients {
        weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
        biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
    };

    // d_out[s] holds dLoss/d(layer output, post-dropout) for the layer being
    // processed.
    let mut d_out: Vec<Vec<f64>> = loss_grad.iter().map(|&g| vec![g]).collect();

    for l in (0..layers).rev() {
        let fan_in = model.layer_sizes[l];
        let fan_out = model.layer_sizes[l + 1];
        let is_output = l == layers - 1;
        let mut d_in: Vec<Vec<f64>> = vec![vec![0.0; fan_in]; n];

        for s in 0..n {
            let out_row = &trace.activations[l][s];
            // Through dropout (post-activation), then the nonlinearity.
            let mut d_pre = vec![0.0; fan_out];
            for o in 0..fan_out {
                let mut g = d_out[s][o];
                if is_output {
                    // identity output
                } else {
                    if let Some(layer_masks) = trace.masks.get(l) {
                        g *= layer_masks[s][o];
                    }
                    g *= model.activation.grad_from_output(out_row[o]);
                }
                d_pre[o] = g;
            }

            let input_row: Vec<f64> = if l == 0 {
                trace.inputs[s].clone()
            } else {
                let prev = &trace.activations[l - 1][s];
                match trace.masks.get(l - 1) {
                    Some(layer_masks) => prev
                        .iter()
                        .zip(&layer_masks[s])
                        .map(|(v, f)| v * f)
                        .collect(),
                    None => prev.clone(),
                }
            };

            let w = &model.weights[l];
            for o in 0..fan_out {
                let g = d_pre[o];
                if g == 0.0 {
                    continue;
                }
                grads.biases[l][o] += g;
                let wrow = &w[o * fan_in..(o + 1) * fan_in];
                let grow = &mut grads.weights[l][o * fan_in..(o + 1) * fan_in];
                for i in 0..fan_in {
                    grow[i] += g * input_row[i];
                    d_in[s][i] += g * wrow[i];
                }
            }
        }
        d_out = d_in;
    }
    Ok(grads)
}

/// Index-aligned predictions for every record, labeled or not.
pub fn predict(model: &Regressor, ds: &Dataset) -> Result<Vec<f64>> {
    ds.records
        .iter()
        .map(|rec| model.forward_one(&rec.features))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    t: u64,
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64, weight_decay: f64, model: &Regressor) -> Self {
        let zero_like =
            |v: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { v.iter().map(|x| vec![0.0; x.len()]).collect() };
        Optimizer {
            kind,
            lr,
            weight_decay,
            m_w: zero_like(&model.weights),
            v_w: zero_like(&model.weights),
            m_b: zero_like(&model.biases),
            v_b: zero_like(&model.biases),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut Regressor, grads: &Gradients) {
        self.t += 1;
        // Decoupled weight decay on weights only.
        if self.weight_decay > 0.0 {
            for w in model.weights.iter_mut() {
                for v in w.iter_mut() {
                    *v -= self.lr * self.weight_decay * *v;
                }
            }
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for l in 0..model.weights.len() {
                    for (w, g) in model.weights[l].iter_mut().zip(&grads.weights[l]) {
                        *w -= self.lr * g;
                    }
                    for (b, g) in model.biases[l].iter_mut().zip(&grads.biases[l]) {
                        *b -= self.lr * g;
                    }
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                let update = |param: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *param -= lr * mhat / (vhat.sqrt() + epsilon);
                };
                for l in 0..model.weights.len() {
                    for i in 0..model.weights[l].len() {
                        let g = grads.weights[l][i];
                        update(
                            &mut model.weights[l][i],
                            g,
                            &mut self.m_w[l][i],
                            &mut self.v_w[l][i],
                            self.lr,
                        );
                    }
                    for i in 0..model.biases[l].len() {
                        let g = grads.biases[l][i];
                        update(
                            &mut model.biases[l][i],
                            g,
                            &mut self.m_b[l][i],
                            &mut self.v_b[l][i],
                            self.lr,
                        );
                    }
                }
            }
        }
        model.version += 1;
    }
}

/// Supervised training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub loss: LossConfig,
    /// Epochs without dev-SRCC improvement before stopping.
    pub patience: usize,
    pub shuffle: bool,
    pub weight_decay: f64,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 100,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            seed: 0,
            loss: LossConfig::default(),
            patience: 10,
            shuffle: true,
            weight_decay: 0.0,
            dropout: 0.0,
        }
    }
}

impl TrainConfig {
    /// The cache capacity the trainer will actually use: the configured value
    /// or four times the batch size for cache-using families.
    pub fn effective_cache_capacity(&self) -> usize {
        if self.loss.family.uses_cache() {
            self.loss.cache_capacity.unwrap_or(4 * self.batch_size)
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig {
                field: "train.batch_size".into(),
                msg: "must be at least 1".into(),
            });
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig {
                field: "train.epochs".into(),
                msg: "must be at least 1".into(),
            });
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig {
                field: "train.learning_rate".into(),
                msg: format!("must be positive, got {}", self.learning_rate),
            });
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig {
                field: "train.patience".into(),
                msg: "must be at least 1".into(),
            });
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig {
                field: "train.weight_decay".into(),
                msg: format!("must be nonnegative, got {}", self.weight_decay),
            });
        }
        if !self.dropout.is_finite() || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig {
                field: "train.dropout".into(),
                msg: format!("must lie in [0, 1), got {}", self.dropout),
            });
        }
        if self.loss.family.is_rank_family()
            && self.batch_size < 2
            && self.effective_cache_capacity() == 0
        {
            return Err(Error::InvalidConfig {
                field: "train.batch_size".into(),
                msg: "rank losses need pairs: batch_size >= 2 unless a comparison cache is enabled"
                    .into(),
            });
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_utterance: MetricReport,
    pub dev_system: MetricReport,
    pub checkpoint_taken: bool,
}

/// Per-epoch records; exactly one entry per completed epoch.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// Best dev SRCC (utterance level) over all epochs.
    pub fn best_dev_srcc(&self) -> Option<f64> {
        self.epochs
            .iter()
            .filter_map(|e| e.dev_utterance.srcc)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }

    /// Writes the log as CSV: epoch, train loss, dev metrics at both levels,
    /// and whether the epoch's parameters were checkpointed.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "epoch",
            "train_loss",
            "dev_utt_mse",
            "dev_utt_lcc",
            "dev_utt_srcc",
            "dev_utt_ktau",
            "dev_sys_mse",
            "dev_sys_lcc",
            "dev_sys_srcc",
            "dev_sys_ktau",
            "checkpoint_taken",
        ])?;
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{}", e.train_loss),
                format!("{}", e.dev_utterance.mse),
                fmt(e.dev_utterance.lcc),
                fmt(e.dev_utterance.srcc),
                fmt(e.dev_utterance.ktau),
                format!("{}", e.dev_system.mse),
                fmt(e.dev_system.lcc),
                fmt(e.dev_system.srcc),
                fmt(e.dev_system.ktau),
                e.checkpoint_taken.to_string(),
            ])?;
        }
        w.flush()
    }
}

/// Trains `model` on labeled data, checkpointing on dev SRCC.
///
/// Returns the parameters of the best-dev-SRCC epoch together with the full
/// log. The starting model is not mutated.
pub fn train(
    model: &Regressor,
    train_ds: &Dataset,
    dev_ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Regressor, TrainLog)> {
    cfg.validate()?;
    if train_ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let train_labels = train_ds.labels()?;
    if dev_ds.is_empty() {
        return Err(Error::InvalidConfig {
            field: "dev".into(),
            msg: "development set must be nonempty".into(),
        });
    }
    let dev_labels = dev_ds.labels()?;
    let mut current = model.clone();
    current.check_input_dim(train_ds.feature_dim())?;
    current.check_input_dim(dev_ds.feature_dim())?;

    let dev_groups = group_by_system(dev_ds);
    let mut shuffle_rng = substream(cfg.seed, "shuffle");
    let mut dropout_rng = substream(cfg.seed, "dropout");
    let uses_cache = cfg.loss.family.uses_cache();
    let mut cache = ComparisonCache::new(cfg.effective_cache_capacity());
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, cfg.weight_decay, &current);

    let n = train_ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog::default();
    let mut best_model = current.clone();
    let mut best_srcc = f64::NEG_INFINITY;
    let mut epochs_since_improvement = 0usize;

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let mut batch_losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 && cfg.loss.family.is_rank_family() && !uses_cache {
                // Rank losses need pairs; drop the undersized trailing batch.
                continue;
            }
            let features: Vec<&[f64]> = chunk
                .iter()
                .map(|&i| train_ds.records[i].features.as_slice())
                .collect();
            let labels: Vec<f64> = chunk.iter().map(|&i| train_labels[i]).collect();

            let (preds, trace) = forward_train(
                &current,
                &features,
                cfg.dropout,
                if cfg.dropout > 0.0 {
                    Some(&mut dropout_rng)
                } else {
                    None
                },
            )?;

            if chunk.len() < 2 && cfg.loss.family.is_rank_family() && cache.is_empty() {
                // A singleton batch has no comparisons yet; prime the cache
                // and move on without a step.
                cache.push(&preds, &labels);
                continue;
            }

            let loss = cfg
                .loss
                .evaluate(&preds, &labels, if uses_cache { Some(&cache) } else { None })?;
            let grads = backward(&current, &trace, &loss.grad)?;
            optimizer.step(&mut current, &grads);
            if uses_cache {
                // Stale by design: the cached predictions are the ones the
                // step above was computed from.
                cache.push(&preds, &labels);
            }
            batch_losses.push(loss.value);
        }

        let train_loss = if batch_losses.is_empty() {
            0.0
        } else {
            numeric::mean(&batch_losses)
        };

        let dev_preds = predict(&current, dev_ds)?;
        let (dev_utt, dev_sys) = both_level_reports(&dev_preds, &dev_labels, &dev_groups)?;
        let dev_srcc = dev_utt.srcc.ok_or_else(|| Error::UndefinedMetric {
            metric: "srcc".into(),
            reason: "dev SRCC undefined; cannot select checkpoints".into(),
        })?;

        let checkpoint_taken = dev_srcc > best_srcc;
        if checkpoint_taken {
            best_srcc = dev_srcc;
            best_model = current.clone();
            epochs_since_improvement = 0;
        } else {
            epochs_since_improvement += 1;
        }

        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_utterance: dev_utt,
            dev_system: dev_sys,
            checkpoint_taken,
        });

        if epochs_since_improvement >= cfg.patience {
            break;
        }
    }

    Ok((best_model, log))
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    architecture: Architecture,
    activation: Activation,
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    seed: u64,
}

const CHECKPOINT_VERSION: u32 = 1;

/// Serializes a model to the versioned JSON checkpoint container. All
/// parameters are 64-bit floats and round-trip exactly.
pub fn save_checkpoint(model: &Regressor, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        architecture: model.architecture,
        activation: model.activation,
        layer_sizes: model.layer_sizes.clone(),
        params: model.flat_params(),
        seed: model.seed,
    };
    let json = serde_json::to_string(&file).map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads a model from a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Regressor> {
    let json = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: CheckpointFile =
        serde_json::from_str(&json).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            file.version
        )));
    }
    let mut model = init_regressor(file.architecture, &file.layer_sizes, file.activation, file.seed)?;
    model.set_flat_params(&file.params)?;
    model.version = 0;
    Ok(model)
}
