//! Parameter containers and the Adam optimizer.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-layer parameter tensors; also used for gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Params {
    pub fn zeros(shapes: &[(usize, usize)]) -> Self {
        Self {
            weights: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            biases: shapes.iter().map(|&(_, o)| Array1::zeros(o)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: self.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.weights.iter().map(|w| w.dim()).collect()
    }

    pub fn len(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    /// Visits every scalar as `(param, other)` pairs in a fixed order.
    pub fn zip_mut_with(&mut self, other: &Self, mut f: impl FnMut(&mut f64, f64)) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.zip_mut_with(b, |x, &y| f(x, y));
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.zip_mut_with(b, |x, &y| f(x, y));
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().flat_map(|w| w.iter()).chain(self.biases.iter().flat_map(|b| b.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .flat_map(|w| w.iter_mut())
            .chain(self.biases.iter_mut().flat_map(|b| b.iter_mut()))
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Exponentially decaying learning rate `lr0 · decay^(step / period)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub lr0: f64,
    pub decay: f64,
    pub period: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            decay: 0.1,
            period: 2000.0,
        }
    }
}

impl LrSchedule {
    pub fn constant(lr0: f64) -> Self {
        Self {
            lr0,
            decay: 1.0,
            period: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.decay > 0.0 && self.decay <= 1.0 && self.period > 0.0) {
            return Err(Error::InvalidParameter(format!("bad learning-rate schedule {self:?}")));
        }
        Ok(())
    }

    pub fn rate(&self, step: u64) -> f64 {
        self.lr0 * self.decay.powf(step as f64 / self.period)
    }
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Bias-corrected Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: Params,
    pub v: Params,
    /// Number of updates applied so far.
    pub step: u64,
}

impl Adam {
    pub fn new(like: &Params) -> Self {
        Self {
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }

    /// Applies one update and returns the learning rate used.
    pub fn update(&mut self, params: &mut Params, grads: &Params, schedule: &LrSchedule) -> f64 {
        let lr = schedule.rate(self.step);
        self.step += 1;
        let c1 = 1.0 - BETA1.powf(self.step as f64);
        let c2 = 1.0 - BETA2.powf(self.step as f64);
        self.m.zip_mut_with(grads, |m, g| *m = BETA1 * *m + (1.0 - BETA1) * g);
        self.v.zip_mut_with(grads, |v, g| *v = BETA2 * *v + (1.0 - BETA2) * g * g);
        let mut mv = self.m.clone();
        mv.zip_mut_with(&self.v, |m, v| {
            let m_hat = *m / c1;
            let v_hat = v / c2;
            *m = m_hat / (v_hat.sqrt() + EPSILON);
        });
        params.zip_mut_with(&mv, |p, d| *p -= lr * d);
        lr
    }
}
