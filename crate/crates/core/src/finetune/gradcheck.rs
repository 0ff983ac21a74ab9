use super::loss::{gradient_at, regularized_loss_at};
use super::model::TinyTwoHeadModel;
use super::{FinetuneError, LabeledSample};

/// Scalar function of a parameter vector with an analytic gradient.
pub trait Objective {
    fn value(&self, theta: &[f64]) -> f64;
    fn gradient(&self, theta: &[f64]) -> Vec<f64>;
}

/// The full fine-tuning loss on a fixed batch.
pub struct RegularizedObjective<'a> {
    model: &'a TinyTwoHeadModel,
    batch: &'a [LabeledSample],
    lambda: f64,
    alpha: f64,
}

impl<'a> RegularizedObjective<'a> {
    pub fn new(
        model: &'a TinyTwoHeadModel,
        batch: &'a [LabeledSample],
        lambda: f64,
        alpha: f64,
    ) -> Result<Self, FinetuneError> {
        if batch.is_empty() {
            return Err(FinetuneError::EmptyBatch);
        }
        for s in batch {
            s.validate(model.shape.inputs)?;
        }
        Ok(Self {
            model,
            batch,
            lambda,
            alpha,
        })
    }
}

impl Objective for RegularizedObjective<'_> {
    fn value(&self, theta: &[f64]) -> f64 {
        regularized_loss_at(self.model, theta, self.batch, self.lambda, self.alpha).expect("batch validated")
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        gradient_at(self.model, theta, self.batch, self.lambda, self.alpha).expect("batch validated")
    }
}

/// Weight-decay term alone.
pub struct L2Penalty {
    pub alpha: f64,
}

impl Objective for L2Penalty {
    fn value(&self, theta: &[f64]) -> f64 {
        super::l2_penalty(theta, self.alpha)
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().map(|t| self.alpha * t).collect()
    }
}

/// `|a - b| / max(|a|, |b|)`, zero when both are equal.
pub fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

/// Largest relative error between the analytic gradient and central
/// differences `(L(θ + h·e_j) - L(θ - h·e_j)) / 2h`.
pub fn finite_diff_grad_check(objective: &dyn Objective, theta: &[f64], h: f64) -> f64 {
    let analytic = objective.gradient(theta);
    let mut probe = theta.to_vec();
    let mut worst = 0.0f64;
    for j in 0..theta.len() {
        probe[j] = theta[j] + h;
        let up = objective.value(&probe);
        probe[j] = theta[j] - h;
        let down = objective.value(&probe);
        probe[j] = theta[j];
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[j], numeric));
    }
    worst
}

/// Gradient check of the regularized loss at the model's current parameters.
pub fn grad_check(
    model: &TinyTwoHeadModel,
    batch: &[LabeledSample],
    lambda: f64,
    alpha: f64,
    h: f64,
) -> Result<f64, FinetuneError> {
    if h.is_nan() || h <= 0.0 {
        return Err(FinetuneError::InvalidConfig(
            "finite-difference step must be positive".into(),
        ));
    }
    let obj = RegularizedObjective::new(model, batch, lambda, alpha)?;
    Ok(finite_diff_grad_check(&obj, &model.params, h))
}
