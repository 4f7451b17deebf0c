//! SGD with momentum, the step learning-rate schedule, the weight-vector
//! projection, and the training loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::losses::{LossSpec, Objective};
use crate::model::{Gradients, Model};
use crate::numerics::{norm, Matrix};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs at which the learning rate is multiplied by `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    /// Project every classifier weight vector to unit norm after each step.
    pub wvn: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 30,
            batch_size: 64,
            decay_epochs: Vec::new(),
            decay_factor: 0.1,
            wvn: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidArgument(msg));
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return bad(format!("weight_decay must be finite and >= 0, got {}", self.weight_decay));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad(format!("decay_factor must lie in (0, 1], got {}", self.decay_factor));
        }
        Ok(())
    }
}

/// Piecewise-constant schedule: `η · factor^(number of milestones ≤ epoch)`.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    let passed = config.decay_epochs.iter().filter(|&&m| epoch >= m).count();
    config.learning_rate * libm::pow(config.decay_factor, passed as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    /// One momentum buffer per parameter block of the model.
    pub velocity: Vec<Vec<f64>>,
    pub epoch: usize,
    pub iteration: u64,
    pub lr: f64,
}

impl OptimizerState {
    pub fn new(model: &Model, config: &TrainConfig) -> Self {
        OptimizerState {
            velocity: model.blocks().iter().map(|b| vec![0.0; b.len()]).collect(),
            epoch: 0,
            iteration: 0,
            lr: lr_at(0, config),
        }
    }
}

/// One momentum step on every parameter:
/// `v ← μ v + g + λ θ`, `θ ← θ − lr · v`.
pub fn sgd_step(
    model: &mut Model,
    grads: &Gradients,
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    let grad_blocks = grads.blocks();
    let mut params = model.blocks_mut();
    let shapes_match = params.len() == grad_blocks.len()
        && params.len() == state.velocity.len()
        && params
            .iter()
            .zip(&grad_blocks)
            .zip(&state.velocity)
            .all(|((p, g), v)| p.len() == g.len() && p.len() == v.len());
    if !shapes_match {
        return Err(Error::invalid("gradient or optimizer state shape does not match the model"));
    }
    let (mu, wd, lr) = (config.momentum, config.weight_decay, state.lr);
    for ((p, g), v) in params.iter_mut().zip(&grad_blocks).zip(&mut state.velocity) {
        for ((pi, gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
            *vi = mu * *vi + gi + wd * *pi;
            *pi -= lr * *vi;
        }
    }
    state.iteration += 1;
    Ok(())
}

/// Replaces each weight vector (row) by its unit-norm direction.
///
/// Fails without modifying anything if some row has zero norm.
pub fn wvn_project(classifier: &mut Matrix) -> Result<()> {
    let norms: Vec<f64> = classifier.iter_rows().map(norm).collect();
    if let Some(k) = norms.iter().position(|&n| !(n > 0.0) || !n.is_finite()) {
        return Err(Error::NumericDegeneracy(format!(
            "weight vector of class {k} has norm {}",
            norms[k]
        )));
    }
    for (k, n) in norms.into_iter().enumerate() {
        classifier.row_mut(k).iter_mut().for_each(|v| *v /= n);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    /// `‖w_j‖` at the end of the epoch.
    pub weight_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
}

/// Trains `model` in place with seeded-shuffle mini-batches.
///
/// The objective is bound to the class counts of `dataset`. The last,
/// possibly smaller, batch of each epoch is kept.
pub fn train(
    model: &mut Model,
    dataset: &Dataset,
    loss: &LossSpec,
    config: &TrainConfig,
) -> Result<TrainTrace> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if dataset.input_dim() != model.input_dim() || dataset.num_classes() != model.num_classes() {
        return Err(Error::invalid(format!(
            "dataset is {}-dim with {} classes, model expects {}-dim with {}",
            dataset.input_dim(),
            dataset.num_classes(),
            model.input_dim(),
            model.num_classes()
        )));
    }
    let objective = Objective::new(*loss, dataset.class_counts())?;
    let mut state = OptimizerState::new(model, config);
    let mut rng = rng::stream(config.seed, "shuffle");
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = TrainTrace::default();

    for epoch in 0..config.epochs {
        state.epoch = epoch;
        state.lr = lr_at(epoch, config);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut records = Vec::with_capacity(batch.len());
            let mut labels = Vec::with_capacity(batch.len());
            for &i in batch {
                let rec = model.forward(dataset.input(i))?;
                let y = dataset.label(i);
                correct += usize::from(rec.predicted() == y);
                records.push(rec);
                labels.push(y);
            }
            let batch_loss = objective.batch(&records, &labels)?;
            if !batch_loss.value.is_finite() {
                return Err(Error::NumericDegeneracy(format!(
                    "non-finite loss at epoch {epoch}, iteration {}",
                    state.iteration
                )));
            }
            loss_sum += batch_loss.value * batch.len() as f64;
            let grads = model.backward_from_logit_grads(&records, &batch_loss.logit_grads)?;
            sgd_step(model, &grads, &mut state, config)?;
            if config.wvn {
                wvn_project(model.classifier_mut()).map_err(|e| match e {
                    Error::NumericDegeneracy(msg) => Error::NumericDegeneracy(format!(
                        "{msg} (epoch {epoch}, iteration {})",
                        state.iteration
                    )),
                    other => other,
                })?;
            }
        }
        let stats = EpochStats {
            epoch,
            lr: state.lr,
            train_loss: loss_sum / dataset.len() as f64,
            train_acc: correct as f64 / dataset.len() as f64,
            weight_norms: model.weight_norms(),
        };
        log::debug!(
            "epoch {epoch}: lr {:.4} loss {:.5} acc {:.4}",
            stats.lr,
            stats.train_loss,
            stats.train_acc
        );
        trace.epochs.push(stats);
    }
    Ok(trace)
}
