//! Supervised training of the network weights against exact targets,
//! with Adam, loss backpropagated through the unrolled recurrence, and
//! early stopping on validation loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabeledModel};
use crate::error::{Error, Result};
use crate::gnn::{build_gnn_graph_with, forward, init_weights, GnnArchitecture, GnnGraph, GnnWeights};
use crate::rng;
use crate::tape::{Tape, Tensor, ValueId};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// What the readout is trained to hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Exact marginals `q_i = p_i(+1)`.
    Marginals,
    /// Indicator of the exact MAP state, `q_i = 1` iff `x_i* = +1`.
    Map,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Marginals => "marginals",
            Task::Map => "map",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Validation checks without improvement before stopping.
    pub early_stop_window: usize,
    pub max_epochs: usize,
    /// Graphs per optimizer step; their gradients are averaged.
    pub batch_size: usize,
    pub task: Task,
    pub seed: u64,
    /// Optional max-abs gradient clip; off by default.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            early_stop_window: 20,
            max_epochs: 500,
            batch_size: 10,
            task: Task::Marginals,
            seed: 0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Contract("learning rate must be > 0".into()));
        }
        if self.early_stop_window == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Contract(
                "window, batch size and max epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean per-graph training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Mean per-graph validation loss per epoch (one check per epoch).
    pub val_loss: Vec<f64>,
    /// Epoch (1-based) of the best validation loss.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
}

/// Early-stopping bookkeeping: strict improvements reset the window.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    window: usize,
    best: f64,
    best_check: usize,
    checks: usize,
}

impl EarlyStopper {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            best: f64::INFINITY,
            best_check: 0,
            checks: 0,
        }
    }

    /// Record one validation value; returns true when training should stop
    /// (no strict improvement for `window` consecutive checks).
    pub fn record(&mut self, value: f64) -> bool {
        self.checks += 1;
        if value < self.best {
            self.best = value;
            self.best_check = self.checks;
        }
        self.checks - self.best_check >= self.window
    }

    pub fn improved_at_last_check(&self) -> bool {
        self.best_check == self.checks
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_check(&self) -> usize {
        self.best_check
    }
}

/// Per-variable training targets for a labeled model.
pub fn targets_for(task: Task, model: &LabeledModel) -> Vec<f64> {
    match task {
        Task::Marginals => model.truth.marginals_p1.clone(),
        Task::Map => model
            .truth
            .map_state
            .iter()
            .map(|&s| if s == 1 { 1.0 } else { 0.0 })
            .collect(),
    }
}

/// Binary cross-entropy summed over variables, on the tape:
/// `-sum_i [ q_i log p_i + (1 - q_i) log(1 - p_i) ]`, covering both spin
/// states of each variable.
pub fn cross_entropy_loss(tape: &mut Tape, preds: &[ValueId], targets: &[f64]) -> Result<ValueId> {
    if preds.len() != targets.len() {
        return Err(Error::Contract(format!(
            "{} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Contract("loss over zero variables".into()));
    }
    let mut terms = Vec::with_capacity(2 * preds.len());
    for (&p, &q) in preds.iter().zip(targets) {
        let value = tape.value(p).item();
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::Contract(format!(
                "prediction {value} saturated outside (0, 1)"
            )));
        }
        let one = tape.leaf(Tensor::scalar(1.0));
        let log_p = tape.log(p)?;
        let one_minus_p = tape.sub(one, p)?;
        let log_1mp = tape.log(one_minus_p)?;
        terms.push(tape.scalar_mul(log_p, -q));
        terms.push(tape.scalar_mul(log_1mp, -(1.0 - q)));
    }
    let total = tape.sum_all(&terms)?;
    Ok(tape.sum_elems(total))
}

/// The same loss as a plain number, for validation.
pub fn cross_entropy_value(preds: &[f64], targets: &[f64]) -> f64 {
    preds
        .iter()
        .zip(targets)
        .map(|(&p, &q)| -(q * p.ln() + (1.0 - q) * (1.0 - p).ln()))
        .sum()
}

struct PreparedModel {
    graph: GnnGraph,
    targets: Vec<f64>,
}

fn prepare(models: &[LabeledModel], arch: &GnnArchitecture, task: Task) -> Vec<PreparedModel> {
    models
        .iter()
        .map(|model| PreparedModel {
            graph: build_gnn_graph_with(&model.mrf, arch.kind, arch.feature_mode),
            targets: targets_for(task, model),
        })
        .collect()
}

fn forward_loss_value(weights: &GnnWeights, prepared: &PreparedModel) -> Result<f64> {
    let mut tape = Tape::new();
    let pass = forward(&prepared.graph, weights, weights.arch.t_steps, &mut tape)?;
    Ok(cross_entropy_value(&pass.marginals_p1, &prepared.targets))
}

fn mean_loss(weights: &GnnWeights, prepared: &[PreparedModel]) -> Result<f64> {
    let mut total = 0.0;
    for p in prepared {
        total += forward_loss_value(weights, p)?;
    }
    Ok(total / prepared.len().max(1) as f64)
}

/// Train from a fresh initialization. Epochs shuffle the training set with
/// a per-epoch seed; each batch forwards its graphs on separate tapes,
/// averages the gradients, and takes one Adam step. Validation runs once
/// per epoch; the weights returned are the best-validation snapshot.
pub fn train(
    dataset: &Dataset,
    arch: &GnnArchitecture,
    cfg: &TrainConfig,
) -> Result<(GnnWeights, TrainHistory)> {
    cfg.validate()?;
    arch.validate()?;
    if dataset.train.is_empty() || dataset.val.is_empty() {
        return Err(Error::Contract("training needs non-empty train and val splits".into()));
    }
    let mut weights = init_weights(arch, &mut rng::sub_rng(cfg.seed, INIT_STREAM))?;
    let train_set = prepare(&dataset.train, arch, cfg.task);
    let val_set = prepare(&dataset.val, arch, cfg.task);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stop_reason: StopReason::MaxEpochs,
    };
    let mut stopper = EarlyStopper::new(cfg.early_stop_window);
    let mut best_snapshot = weights.store.snapshot();

    for epoch in 1..=cfg.max_epochs {
        let mut shuffle_rng =
            rng::sub_rng(rng::derive_seed(cfg.seed, SHUFFLE_STREAM), epoch as u64);
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let scale = 1.0 / batch.len() as f64;
            for &model_idx in batch {
                let prepared = &train_set[model_idx];
                let mut tape = Tape::new();
                let pass = forward(&prepared.graph, &weights, arch.t_steps, &mut tape)?;
                let loss = cross_entropy_loss(&mut tape, &pass.pred_ids, &prepared.targets)?;
                let loss_value = tape.value(loss).item();
                if !loss_value.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
                }
                epoch_loss += loss_value;
                let scaled = tape.scalar_mul(loss, scale);
                tape.backward(scaled, &mut weights.store)?;
            }
            if let Some(clip) = cfg.grad_clip {
                let max_abs = weights.store.grad_max_abs();
                if max_abs > clip {
                    weights.store.scale_grads(clip / max_abs);
                }
            }
            weights.store.adam_step(cfg.learning_rate, 0.9, 0.999, 1e-8)?;
        }
        history.train_loss.push(epoch_loss / train_set.len() as f64);

        let val = mean_loss(&weights, &val_set)?;
        if !val.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        history.val_loss.push(val);
        let stop = stopper.record(val);
        if stopper.improved_at_last_check() {
            history.best_epoch = epoch;
            history.best_val_loss = val;
            best_snapshot = weights.store.snapshot();
        }
        if stop {
            history.stop_reason = StopReason::EarlyStop;
            break;
        }
    }

    weights.store.restore(&best_snapshot)?;
    Ok((weights, history))
}

// Tags separating the init and shuffle seed sub-streams.
const INIT_STREAM: u64 = 0x1717;
const SHUFFLE_STREAM: u64 = 0x5455_4646;

/// A trained checkpoint: weights plus the config echo and history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub format_version: u32,
    pub weights: crate::gnn::WeightsFile,
    pub config: TrainConfig,
    pub history: TrainHistory,
}

impl CheckpointFile {
    pub fn new(weights: &GnnWeights, config: &TrainConfig, history: &TrainHistory) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            weights: crate::gnn::WeightsFile::from_weights(weights),
            config: config.clone(),
            history: history.clone(),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Validation loss of a weight set over a list of labeled models.
pub fn evaluate_loss(weights: &GnnWeights, models: &[LabeledModel], task: Task) -> Result<f64> {
    let prepared = prepare(models, &weights.arch, task);
    mean_loss(weights, &prepared)
}
