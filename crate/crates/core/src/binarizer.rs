//! Continuous encoder output to binary OOK symbols.
//!
//! During training every coordinate `u_i` becomes a Bernoulli draw with
//! probability `h(u_i) = sigmoid(u_i - offset_d)`; the backward pass uses the
//! derivative of `h` in place of the sampling step (straight-through). At
//! evaluation the draw is replaced by the threshold `u_i >= offset_d`.
//!
//! The per-target offset is chosen so that the mean of `h` over the assumed
//! output range `[-B, B]` equals the target duty cycle `d / N`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{sigmoid, softplus};

pub const DEFAULT_RANGE_BOUND: f64 = 4.0;
const OFFSET_RESIDUAL: f64 = 1e-9;

/// Offsets for every configured dimming target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarizerSpec {
    pub range_bound: f64,
    pub targets: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl BinarizerSpec {
    /// `duty_cycles[i]` is the fraction of "on" slots that target `i` asks for,
    /// i.e. `d / N` for an ideal LED.
    pub fn new(targets: &[f64], duty_cycles: &[f64], range_bound: f64) -> Result<Self> {
        if targets.len() != duty_cycles.len() {
            return Err(Error::Dimension {
                context: "binarizer targets",
                expected: targets.len(),
                actual: duty_cycles.len(),
            });
        }
        let offsets = duty_cycles
            .iter()
            .map(|&ratio| solve_offset_ratio(ratio, range_bound))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            range_bound,
            targets: targets.to_vec(),
            offsets,
        })
    }

    pub fn offset(&self, target_index: usize) -> f64 {
        self.offsets[target_index]
    }
}

/// Offset `delta` with `(1/2B) * integral_{-B}^{B} sigmoid(z - delta) dz = d / n`.
pub fn solve_offset(d: f64, n: usize, range_bound: f64) -> Result<f64> {
    solve_offset_ratio(d / n as f64, range_bound)
}

/// Mean of `sigmoid(z - delta)` over `[-B, B]`, via the softplus antiderivative.
pub fn mean_activation(delta: f64, range_bound: f64) -> f64 {
    (softplus(range_bound - delta) - softplus(-range_bound - delta)) / (2.0 * range_bound)
}

fn solve_offset_ratio(ratio: f64, range_bound: f64) -> Result<f64> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::domain(format!("duty cycle {ratio} outside (0, 1)")));
    }
    if !(range_bound > 0.0 && range_bound.is_finite()) {
        return Err(Error::domain(format!("range bound {range_bound} must be positive")));
    }
    // mean_activation is decreasing in delta
    let (mut lo, mut hi) = (-range_bound - 1e3, range_bound + 1e3);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mean_activation(mid, range_bound) > ratio {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
    }
    let delta = 0.5 * (lo + hi);
    let residual = (mean_activation(delta, range_bound) - ratio).abs();
    if residual > OFFSET_RESIDUAL {
        return Err(Error::domain(format!(
            "offset solve for duty cycle {ratio} left residual {residual:e}"
        )));
    }
    Ok(delta)
}

/// Bernoulli probabilities `h(u_i)`.
pub fn probabilities(u: &[f64], offset: f64) -> Vec<f64> {
    u.iter().map(|&x| sigmoid(x - offset)).collect()
}

/// Draws `s_i ~ Bernoulli(h(u_i))`; returns the bits and the probabilities.
pub fn stochastic_binarize<R: Rng + ?Sized>(u: &[f64], offset: f64, rng: &mut R) -> (Vec<u8>, Vec<f64>) {
    let h = probabilities(u, offset);
    let bits = h.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect();
    (bits, h)
}

/// `s_i = 1` iff `u_i >= offset`, i.e. `h(u_i) >= 1/2`.
pub fn deterministic_binarize(u: &[f64], offset: f64) -> Vec<u8> {
    u.iter().map(|&x| u8::from(x >= offset)).collect()
}

/// Straight-through gradient: `upstream * h * (1 - h)`.
pub fn ste_backward(h: &[f64], upstream: &[f64]) -> Vec<f64> {
    h.iter().zip(upstream).map(|(&p, &g)| g * p * (1.0 - p)).collect()
}
