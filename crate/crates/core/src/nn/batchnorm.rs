use std::sync::atomic::{AtomicBool, Ordering};

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};

use super::{Matrix, Mode, Vector};

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-5;

static WARNED_UNTRAINED_EVAL: AtomicBool = AtomicBool::new(false);

/// Per-feature batch normalization with learned scale and shift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vector,
    pub beta: Vector,
    pub running_mean: Vector,
    pub running_var: Vector,
    pub momentum: f64,
    pub epsilon: f64,
    /// Number of train-mode batches folded into the running averages.
    pub updates: u64,
}

/// Values recorded by [`BatchNorm::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct BnCache {
    pub mode: Mode,
    pub normalized: Matrix,
    pub inv_std: Vector,
    pub batch_mean: Vector,
    pub batch_var: Vector,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
            updates: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, z: &Matrix, mode: Mode) -> (Matrix, BnCache) {
        let rows = z.nrows() as f64;
        let (mean, var) = match mode {
            Mode::Train => {
                let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                let centered = z - &mean;
                let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / rows;
                (mean, var)
            }
            Mode::Eval => {
                if self.updates == 0 && !WARNED_UNTRAINED_EVAL.swap(true, Ordering::Relaxed) {
                    log::warn!("batch norm evaluated before any training step; using initial statistics");
                }
                (self.running_mean.clone(), self.running_var.clone())
            }
        };
        let inv_std = var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let normalized = (z - &mean) * &inv_std;
        let out = &normalized * &self.gamma + &self.beta;
        (
            out,
            BnCache {
                mode,
                normalized,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        )
    }

    /// Returns `(d_input, d_gamma, d_beta)`.
    pub fn backward(&self, cache: &BnCache, d_out: &Matrix) -> (Matrix, Vector, Vector) {
        let d_gamma = (d_out * &cache.normalized).sum_axis(Axis(0));
        let d_beta = d_out.sum_axis(Axis(0));
        let d_norm = d_out * &self.gamma;
        let d_in = match cache.mode {
            Mode::Eval => d_norm * &cache.inv_std,
            Mode::Train => {
                let rows = d_out.nrows() as f64;
                let sum_d = d_norm.sum_axis(Axis(0));
                let sum_dx = (&d_norm * &cache.normalized).sum_axis(Axis(0));
                let scaled = &d_norm * rows - &sum_d - &cache.normalized * &sum_dx;
                scaled * &(&cache.inv_std / rows)
            }
        };
        (d_in, d_gamma, d_beta)
    }

    /// Folds a train-mode batch into the running averages.
    pub fn commit(&mut self, cache: &BnCache, batch_rows: usize) {
        if cache.mode != Mode::Train {
            return;
        }
        let unbias = if batch_rows > 1 {
            batch_rows as f64 / (batch_rows as f64 - 1.0)
        } else {
            1.0
        };
        let m = self.momentum;
        self.running_mean = &self.running_mean * m + &cache.batch_mean * (1.0 - m);
        self.running_var = &self.running_var * m + &cache.batch_var * ((1.0 - m) * unbias);
        self.updates += 1;
    }
}
