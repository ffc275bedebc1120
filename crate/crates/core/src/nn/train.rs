use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::forward::{gin_forward, Dropout, GinForward};
use super::loss::{graph_loss_and_grads, loss_and_grads};
use super::model::{Arch, Model};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::rng;
use crate::structure::StructureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation improvement; 0 disables.
    pub early_stop_rounds: usize,
    /// Graphs per optimizer step in graph classification; 0 uses the whole
    /// training set. Node classification is always full-batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            max_epochs: 400,
            early_stop_rounds: 100,
            batch_size: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight_decay must be nonnegative, got {}", self.weight_decay)));
        }
        Ok(())
    }

    fn dropout_for(&self, epoch: usize, item: u64) -> Option<Dropout> {
        (self.dropout > 0.0).then(|| Dropout {
            rate: self.dropout,
            seed: self
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((epoch as u64) << 20)
                .wrapping_add(item),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the best validation accuracy.
    pub model: Model,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    /// Test accuracy at `best_epoch`.
    pub test_acc: f64,
}

impl TrainOutcome {
    pub fn write_history(&self, mut out: impl Write) -> Result<()> {
        for m in &self.history {
            serde_json::to_writer(&mut out, m)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Semi-supervised node classification data.
#[derive(Debug, Clone, Copy)]
pub struct NodeTask<'a> {
    pub structure: &'a StructureMatrix,
    pub features: &'a Array2<f64>,
    pub labels: &'a [usize],
    pub train: &'a [usize],
    pub val: &'a [usize],
    pub test: &'a [usize],
}

/// Graph classification data; masks index into `graphs`.
#[derive(Debug, Clone, Copy)]
pub struct GraphTask<'a> {
    pub graphs: &'a [SparseGraph],
    pub features: &'a [Array2<f64>],
    pub labels: &'a [usize],
    pub train: &'a [usize],
    pub val: &'a [usize],
    pub test: &'a [usize],
}

/// Fraction of `mask` whose argmax logit equals the label; ties go to the
/// lowest class index.
pub fn accuracy(logits: &Array2<f64>, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let hits = mask.iter().filter(|&&i| argmax(logits.row(i).iter()) == labels[i]).count();
    Ok(hits as f64 / mask.len() as f64)
}

pub fn argmax<'a>(row: impl Iterator<Item = &'a f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (c, &x) in row.enumerate() {
        if x > best.1 {
            best = (c, x);
        }
    }
    best.0
}

pub fn evaluate_nodes(model: &Model, m: &StructureMatrix, h0: &Array2<f64>, labels: &[usize], mask: &[usize]) -> Result<f64> {
    let fwd = model.forward_nodes(m, h0, None)?;
    accuracy(fwd.logits(), labels, mask)
}

pub fn graph_logits(model: &Model, graphs: &[SparseGraph], features: &[Array2<f64>]) -> Result<Array2<f64>> {
    let mut logits = Array2::zeros((graphs.len(), model.output_dim()));
    for (i, (g, x)) in graphs.iter().zip(features).enumerate() {
        logits.row_mut(i).assign(&gin_forward(g, x, model, None)?.logits);
    }
    Ok(logits)
}

pub fn evaluate_graphs(model: &Model, task: &GraphTask<'_>, mask: &[usize]) -> Result<f64> {
    accuracy(&graph_logits(model, task.graphs, task.features)?, task.labels, mask)
}

struct Tracker {
    history: Vec<EpochMetrics>,
    best: Option<(usize, f64, f64, Model)>,
    has_val: bool,
}

impl Tracker {
    fn new(has_val: bool) -> Tracker {
        Tracker {
            history: Vec::new(),
            best: None,
            has_val,
        }
    }

    fn record(&mut self, metrics: EpochMetrics, model: &Model) {
        let better = match &self.best {
            None => true,
            Some((_, best_val, _, _)) => !self.has_val || metrics.val_acc > *best_val,
        };
        if better {
            self.best = Some((metrics.epoch, metrics.val_acc, metrics.test_acc, model.clone()));
        }
        self.history.push(metrics);
    }

    fn stale_for(&self, epoch: usize) -> usize {
        self.best.as_ref().map_or(0, |b| epoch - b.0)
    }

    fn finish(self) -> TrainOutcome {
        let (best_epoch, best_val_acc, test_acc, model) = self.best.expect("at least one epoch");
        TrainOutcome {
            model,
            history: self.history,
            best_epoch,
            best_val_acc,
            test_acc,
        }
    }
}

fn mask_accuracy(logits: &Array2<f64>, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        Ok(f64::NAN)
    } else {
        accuracy(logits, labels, mask)
    }
}

fn check_step(loss: f64, model: &Model, epoch: usize) -> Result<()> {
    if !loss.is_finite() || !model.is_finite() {
        return Err(Error::NonFiniteLoss(epoch));
    }
    Ok(())
}

/// Full-batch training of a node-level model. Returns the weights of the
/// epoch with the best validation accuracy, earliest on ties; without a
/// validation set the final epoch is kept.
pub fn train_nodes(mut model: Model, task: &NodeTask<'_>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    if cfg.max_epochs == 0 {
        return Err(Error::Config("max_epochs must be at least 1".into()));
    }
    let prepared = model.prepare_input(task.structure, task.features)?;
    let mut state = AdamState::new(&model);
    let mut tracker = Tracker::new(!task.val.is_empty());
    for epoch in 0..cfg.max_epochs {
        let fwd = model.forward_prepared(task.structure, &prepared, cfg.dropout_for(epoch, 0))?;
        let (loss, grads) = loss_and_grads(&model, &fwd, task.labels, task.train, cfg.weight_decay)?;
        drop(fwd);
        check_step(loss, &model, epoch)?;
        adam_step(&mut model, &grads, &mut state, cfg.learning_rate);
        check_step(loss, &model, epoch)?;

        let eval = model.forward_prepared(task.structure, &prepared, None)?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss,
            val_acc: mask_accuracy(eval.logits(), task.labels, task.val)?,
            test_acc: mask_accuracy(eval.logits(), task.labels, task.test)?,
        };
        tracker.record(metrics, &model);
        if cfg.early_stop_rounds > 0 && !task.val.is_empty() && tracker.stale_for(epoch) >= cfg.early_stop_rounds {
            break;
        }
    }
    Ok(tracker.finish())
}

/// Training of a GIN graph classifier, same selection rule as
/// [`train_nodes`]. With a nonzero `batch_size` each epoch visits the
/// training graphs in a seeded shuffled order, one Adam step per batch, and
/// reports the mean batch loss.
pub fn train_graphs(mut model: Model, task: &GraphTask<'_>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    if model.arch != Arch::Gin {
        return Err(Error::Config("train_graphs needs a GIN model".into()));
    }
    if task.graphs.len() != task.features.len() || task.graphs.len() != task.labels.len() {
        return Err(Error::Dimension("graphs, features and labels differ in length".into()));
    }
    if cfg.max_epochs == 0 {
        return Err(Error::Config("max_epochs must be at least 1".into()));
    }
    if task.train.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut state = AdamState::new(&model);
    let mut tracker = Tracker::new(!task.val.is_empty());
    let mut order = task.train.to_vec();
    let batch = if cfg.batch_size == 0 { order.len() } else { cfg.batch_size };
    for epoch in 0..cfg.max_epochs {
        if cfg.batch_size > 0 {
            rng::shuffle(&mut rng::stream(cfg.seed, 1 + epoch as u64), &mut order);
        }
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(batch) {
            // Only entries listed in `chunk` are read; the rest point at a
            // shared placeholder so indices stay aligned with the labels.
            let mut computed = Vec::with_capacity(chunk.len());
            for &i in chunk {
                computed.push(gin_forward(
                    &task.graphs[i],
                    &task.features[i],
                    &model,
                    cfg.dropout_for(epoch, i as u64),
                )?);
            }
            let mut slot = vec![0; task.graphs.len()];
            for (k, &i) in chunk.iter().enumerate() {
                slot[i] = k;
            }
            let forwards: Vec<&GinForward> = slot.iter().map(|&k| &computed[k]).collect();
            let (loss, grads) = graph_loss_and_grads(&model, &forwards, task.labels, chunk, cfg.weight_decay)?;
            check_step(loss, &model, epoch)?;
            adam_step(&mut model, &grads, &mut state, cfg.learning_rate);
            check_step(loss, &model, epoch)?;
            loss_sum += loss;
            steps += 1;
        }

        let logits = graph_logits(&model, task.graphs, task.features)?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / steps as f64,
            val_acc: mask_accuracy(&logits, task.labels, task.val)?,
            test_acc: mask_accuracy(&logits, task.labels, task.test)?,
        };
        tracker.record(metrics, &model);
        if cfg.early_stop_rounds > 0 && !task.val.is_empty() && tracker.stale_for(epoch) >= cfg.early_stop_rounds {
            break;
        }
    }
    Ok(tracker.finish())
}
