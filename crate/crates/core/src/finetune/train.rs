use serde::{Deserialize, Serialize};

use super::early_stop::{EarlyStopMonitor, StopDecision};
use super::loss::{batch_losses, gradient_at, l2_penalty};
use super::model::TinyTwoHeadModel;
use super::{FinetuneError, LabeledSample};

/// `θ' = θ - η·g`, elementwise.
pub fn sgd_step(theta: &[f64], grad: &[f64], learning_rate: f64) -> Result<Vec<f64>, FinetuneError> {
    if theta.len() != grad.len() {
        return Err(FinetuneError::LengthMismatch {
            expected: theta.len(),
            got: grad.len(),
        });
    }
    Ok(theta.iter().zip(grad).map(|(t, g)| t - learning_rate * g).collect())
}

pub trait Optimizer {
    fn step(&mut self, theta: &[f64], grad: &[f64]) -> Result<Vec<f64>, FinetuneError>;
}

#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    pub learning_rate: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, theta: &[f64], grad: &[f64]) -> Result<Vec<f64>, FinetuneError> {
        sgd_step(theta, grad, self.learning_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    /// Weight of the distance term against the class term.
    pub lambda: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub min_delta: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            lambda: 1.0,
            weight_decay: 1e-4,
            patience: 5,
            max_epochs: 100,
            min_delta: 1e-9,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), FinetuneError> {
        let bad = |what: &str| Err(FinetuneError::InvalidConfig(what.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be >= 0");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be >= 0");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if !(self.min_delta.is_finite() && self.min_delta >= 0.0) {
            return bad("min_delta must be >= 0");
        }
        Ok(())
    }
}

/// One line of training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_classification_loss: f64,
    pub val_regression_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Parameters at the best validation epoch.
    pub params: Vec<f64>,
    pub final_params: Vec<f64>,
    pub initial: EpochRecord,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

fn evaluate(
    model: &TinyTwoHeadModel,
    theta: &[f64],
    train: &[LabeledSample],
    val: &[LabeledSample],
    cfg: &TrainingConfig,
    epoch: usize,
) -> Result<EpochRecord, FinetuneError> {
    let t = batch_losses(model, theta, train)?;
    let v = batch_losses(model, theta, val)?;
    let train_loss = t.classification + cfg.lambda * t.regression + l2_penalty(theta, cfg.weight_decay);
    let val_loss = v.classification + cfg.lambda * v.regression;
    if !train_loss.is_finite() {
        return Err(FinetuneError::NonFiniteLoss(train_loss));
    }
    Ok(EpochRecord {
        epoch,
        train_loss,
        val_loss,
        val_classification_loss: v.classification,
        val_regression_loss: v.regression,
    })
}

/// Full-batch gradient descent on the regularized loss with early stopping
/// on the (unregularized) validation loss. Epochs are numbered from 1; the
/// pre-training state is reported as epoch 0 in `initial`.
pub fn train(
    model: &TinyTwoHeadModel,
    train_set: &[LabeledSample],
    val_set: &[LabeledSample],
    cfg: &TrainingConfig,
) -> Result<TrainOutcome, FinetuneError> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(FinetuneError::EmptyDataset);
    }
    for s in train_set.iter().chain(val_set) {
        s.validate(model.shape.inputs)?;
    }

    let mut opt = Sgd {
        learning_rate: cfg.learning_rate,
    };
    let mut monitor = EarlyStopMonitor::new(cfg.patience, cfg.min_delta);
    let mut theta = model.params.clone();
    let mut best = theta.clone();
    let initial = evaluate(model, &theta, train_set, val_set, cfg, 0)?;
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let grad = gradient_at(model, &theta, train_set, cfg.lambda, cfg.weight_decay)?;
        theta = opt.step(&theta, &grad)?;
        let rec = evaluate(model, &theta, train_set, val_set, cfg, epoch)?;
        let decision = monitor.step(rec.val_loss)?;
        if monitor.epochs_since_improvement == 0 {
            best.clone_from(&theta);
        }
        history.push(rec);
        if decision == StopDecision::Stop {
            stopped_early = true;
            break;
        }
    }

    Ok(TrainOutcome {
        params: best,
        final_params: theta,
        initial,
        history,
        best_epoch: monitor.best_epoch.map(|i| i + 1),
        stopped_early,
    })
}
