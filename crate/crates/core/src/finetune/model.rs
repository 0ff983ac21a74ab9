use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FinetuneError;

/// Input and hidden widths of the two-head model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub inputs: usize,
    pub hidden: usize,
}

impl ModelShape {
    pub fn new(inputs: usize, hidden: usize) -> Self {
        Self { inputs, hidden }
    }

    /// Shared `W` (hidden x inputs) and `b`, classifier `u`, `c`,
    /// regressor `v`, `e`.
    pub fn param_count(&self) -> usize {
        self.hidden * self.inputs + 3 * self.hidden + 2
    }

    fn w(&self) -> std::ops::Range<usize> {
        0..self.hidden * self.inputs
    }
    fn b(&self) -> usize {
        self.hidden * self.inputs
    }
    fn u(&self) -> usize {
        self.b() + self.hidden
    }
    fn c(&self) -> usize {
        self.u() + self.hidden
    }
    fn v(&self) -> usize {
        self.c() + 1
    }
    fn e(&self) -> usize {
        self.v() + self.hidden
    }
}

/// Shared linear features `z = Wx + b` feeding a sigmoid classifier
/// `p = σ(u·z + c)` and a linear distance head `d̂ = v·z + e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyTwoHeadModel {
    pub shape: ModelShape,
    pub params: Vec<f64>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    pub z: Vec<f64>,
    pub prob: f64,
    pub distance: f64,
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl TinyTwoHeadModel {
    pub fn new(shape: ModelShape, params: Vec<f64>) -> Result<Self, FinetuneError> {
        if params.len() != shape.param_count() {
            return Err(FinetuneError::LengthMismatch {
                expected: shape.param_count(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(FinetuneError::InvalidConfig("parameters must be finite".into()));
        }
        Ok(Self { shape, params })
    }

    /// Uniform(-0.5, 0.5) initialization, reproducible per seed.
    pub fn init(shape: ModelShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..shape.param_count()).map(|_| rng.random_range(-0.5..0.5)).collect();
        Self { shape, params }
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<Self, FinetuneError> {
        Self::new(self.shape, params)
    }

    pub(crate) fn forward_with(shape: &ModelShape, theta: &[f64], x: &[f64]) -> Forward {
        let w = &theta[shape.w()];
        let z: Vec<f64> = (0..shape.hidden)
            .map(|k| {
                let row = &w[k * shape.inputs..(k + 1) * shape.inputs];
                row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + theta[shape.b() + k]
            })
            .collect();
        let logit = dot(&theta[shape.u()..shape.u() + shape.hidden], &z) + theta[shape.c()];
        let distance = dot(&theta[shape.v()..shape.v() + shape.hidden], &z) + theta[shape.e()];
        Forward {
            z,
            prob: sigmoid(logit),
            distance,
        }
    }

    /// Class probability and predicted distance for one input.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let f = Self::forward_with(&self.shape, &self.params, x);
        (f.prob, f.distance)
    }

    pub(crate) fn layout(shape: &ModelShape) -> Layout {
        Layout {
            w: shape.w(),
            b: shape.b(),
            u: shape.u(),
            c: shape.c(),
            v: shape.v(),
            e: shape.e(),
        }
    }
}

pub(crate) struct Layout {
    pub w: std::ops::Range<usize>,
    pub b: usize,
    pub u: usize,
    pub c: usize,
    pub v: usize,
    pub e: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
