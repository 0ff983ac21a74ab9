use serde::{Deserialize, Serialize};

use super::FinetuneError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Patience counter over validation losses. An epoch improves only if it
/// beats the best loss so far by more than `min_delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopMonitor {
    pub best_val_loss: f64,
    pub best_epoch: Option<usize>,
    pub epochs_since_improvement: usize,
    pub patience: usize,
    pub min_delta: f64,
    epochs_seen: usize,
}

impl EarlyStopMonitor {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            best_val_loss: f64::INFINITY,
            best_epoch: None,
            epochs_since_improvement: 0,
            patience,
            min_delta,
            epochs_seen: 0,
        }
    }

    pub fn step(&mut self, val_loss: f64) -> Result<StopDecision, FinetuneError> {
        if !val_loss.is_finite() {
            return Err(FinetuneError::NonFiniteLoss(val_loss));
        }
        let epoch = self.epochs_seen;
        self.epochs_seen += 1;
        if val_loss < self.best_val_loss - self.min_delta {
            self.best_val_loss = val_loss;
            self.best_epoch = Some(epoch);
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
        }
        Ok(if self.epochs_since_improvement > self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        })
    }
}
