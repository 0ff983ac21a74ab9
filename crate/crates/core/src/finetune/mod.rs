//! Desk-scale fine-tuning objective on a tiny two-head model.
//!
//! The objective is `L = CE + λ·MSE + (α/2)·Σθ²`, minimized by full-batch
//! gradient descent with validation-loss early stopping. Analytic
//! gradients are checked against central finite differences.

mod early_stop;
mod gradcheck;
mod loss;
mod model;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use early_stop::{EarlyStopMonitor, StopDecision};
pub use gradcheck::{finite_diff_grad_check, grad_check, relative_error, L2Penalty, Objective, RegularizedObjective};
pub use loss::{
    classification_loss, combined_loss, l2_penalty, regression_loss, regularized_gradient, regularized_loss, PROB_EPS,
};
pub use model::{ModelShape, TinyTwoHeadModel};
pub use train::{sgd_step, train, EpochRecord, Optimizer, Sgd, TrainOutcome, TrainingConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FinetuneError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("dataset split is empty")]
    EmptyDataset,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("loss is not finite: {0}")]
    NonFiniteLoss(f64),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// One training example: features, binary class label, true distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: u8,
    pub d: f64,
}

impl LabeledSample {
    pub fn validate(&self, inputs: usize) -> Result<(), FinetuneError> {
        if self.y > 1 {
            return Err(FinetuneError::InvalidSample(format!("label {} is not 0 or 1", self.y)));
        }
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(FinetuneError::InvalidSample(format!(
                "distance {} must be positive",
                self.d
            )));
        }
        if self.x.len() != inputs {
            return Err(FinetuneError::LengthMismatch {
                expected: inputs,
                got: self.x.len(),
            });
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(FinetuneError::InvalidSample("non-finite feature".into()));
        }
        Ok(())
    }
}

/// Parses a dataset file: a JSON list of `{"x": [...], "y": 0|1, "d": ...}`.
pub fn parse_dataset(text: &str) -> Result<Vec<LabeledSample>, FinetuneError> {
    let samples: Vec<LabeledSample> =
        serde_json::from_str(text).map_err(|e| FinetuneError::InvalidSample(e.to_string()))?;
    if let Some(first) = samples.first() {
        let dim = first.x.len();
        for s in &samples {
            s.validate(dim)?;
        }
    }
    Ok(samples)
}
