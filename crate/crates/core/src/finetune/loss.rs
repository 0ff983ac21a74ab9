use super::model::TinyTwoHeadModel;
use super::{FinetuneError, LabeledSample};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before the log.
pub const PROB_EPS: f64 = 1e-12;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Mean binary cross-entropy.
pub fn classification_loss(predictions: &[f64], labels: &[u8]) -> Result<f64, FinetuneError> {
    if predictions.is_empty() {
        return Err(FinetuneError::EmptyBatch);
    }
    if predictions.len() != labels.len() {
        return Err(FinetuneError::LengthMismatch {
            expected: predictions.len(),
            got: labels.len(),
        });
    }
    let total: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            let y = f64::from(y);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(-total / predictions.len() as f64)
}

/// Mean squared error between predicted and true distances.
pub fn regression_loss(predicted: &[f64], truth: &[f64]) -> Result<f64, FinetuneError> {
    if predicted.len() != truth.len() {
        return Err(FinetuneError::LengthMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if predicted.is_empty() {
        return Err(FinetuneError::EmptyBatch);
    }
    let total: f64 = predicted.iter().zip(truth).map(|(p, d)| (d - p) * (d - p)).sum();
    Ok(total / predicted.len() as f64)
}

/// `(α/2)·Σθ²`
pub fn l2_penalty(theta: &[f64], alpha: f64) -> f64 {
    0.5 * alpha * theta.iter().map(|t| t * t).sum::<f64>()
}

pub(crate) struct BatchLosses {
    pub classification: f64,
    pub regression: f64,
}

pub(crate) fn batch_losses(
    model: &TinyTwoHeadModel,
    theta: &[f64],
    batch: &[LabeledSample],
) -> Result<BatchLosses, FinetuneError> {
    if batch.is_empty() {
        return Err(FinetuneError::EmptyBatch);
    }
    let mut probs = Vec::with_capacity(batch.len());
    let mut dists = Vec::with_capacity(batch.len());
    for s in batch {
        if s.x.len() != model.shape.inputs {
            return Err(FinetuneError::LengthMismatch {
                expected: model.shape.inputs,
                got: s.x.len(),
            });
        }
        let f = TinyTwoHeadModel::forward_with(&model.shape, theta, &s.x);
        probs.push(f.prob);
        dists.push(f.distance);
    }
    let labels: Vec<u8> = batch.iter().map(|s| s.y).collect();
    let truth: Vec<f64> = batch.iter().map(|s| s.d).collect();
    Ok(BatchLosses {
        classification: classification_loss(&probs, &labels)?,
        regression: regression_loss(&dists, &truth)?,
    })
}

/// `L_cls + λ·L_reg` through the model.
pub fn combined_loss(model: &TinyTwoHeadModel, batch: &[LabeledSample], lambda: f64) -> Result<f64, FinetuneError> {
    let l = batch_losses(model, &model.params, batch)?;
    Ok(l.classification + lambda * l.regression)
}

pub fn regularized_loss(
    model: &TinyTwoHeadModel,
    batch: &[LabeledSample],
    lambda: f64,
    alpha: f64,
) -> Result<f64, FinetuneError> {
    Ok(combined_loss(model, batch, lambda)? + l2_penalty(&model.params, alpha))
}

pub(crate) fn regularized_loss_at(
    model: &TinyTwoHeadModel,
    theta: &[f64],
    batch: &[LabeledSample],
    lambda: f64,
    alpha: f64,
) -> Result<f64, FinetuneError> {
    let l = batch_losses(model, theta, batch)?;
    Ok(l.classification + lambda * l.regression + l2_penalty(theta, alpha))
}

/// Analytic gradient of [`regularized_loss`] with respect to every parameter.
pub fn regularized_gradient(
    model: &TinyTwoHeadModel,
    batch: &[LabeledSample],
    lambda: f64,
    alpha: f64,
) -> Result<Vec<f64>, FinetuneError> {
    gradient_at(model, &model.params, batch, lambda, alpha)
}

pub(crate) fn gradient_at(
    model: &TinyTwoHeadModel,
    theta: &[f64],
    batch: &[LabeledSample],
    lambda: f64,
    alpha: f64,
) -> Result<Vec<f64>, FinetuneError> {
    if batch.is_empty() {
        return Err(FinetuneError::EmptyBatch);
    }
    let shape = model.shape;
    let l = TinyTwoHeadModel::layout(&shape);
    let n = batch.len() as f64;
    let mut g: Vec<f64> = theta.iter().map(|t| alpha * t).collect();

    for s in batch {
        let f = TinyTwoHeadModel::forward_with(&shape, theta, &s.x);
        // the clamp has zero slope outside its band
        let g_logit = if f.prob > PROB_EPS && f.prob < 1.0 - PROB_EPS {
            (f.prob - f64::from(s.y)) / n
        } else {
            0.0
        };
        let g_dist = lambda * 2.0 * (f.distance - s.d) / n;

        for k in 0..shape.hidden {
            g[l.u + k] += g_logit * f.z[k];
            g[l.v + k] += g_dist * f.z[k];
            let g_z = g_logit * theta[l.u + k] + g_dist * theta[l.v + k];
            g[l.b + k] += g_z;
            for (j, xj) in s.x.iter().enumerate() {
                g[l.w.start + k * shape.inputs + j] += g_z * xj;
            }
        }
        g[l.c] += g_logit;
        g[l.e] += g_dist;
    }
    Ok(g)
}
