//! Cross-entropy cost, dimming constraint functions and the augmented Lagrangian.

use serde::{Deserialize, Serialize};

use crate::binarizer::probabilities;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::optics::LedModel;

/// Smallest probability fed to the logarithm.
pub const LOG_FLOOR: f64 = 1e-300;

/// Lagrange multipliers, one per dimming target, plus the quadratic weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub targets: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub rho: f64,
}

impl DualState {
    pub fn new(targets: &[f64], rho: f64) -> Self {
        Self {
            targets: targets.to_vec(),
            lambdas: vec![0.0; targets.len()],
            rho,
        }
    }
}

/// `-(1/J) sum_j ln p_j[b_j]`, where `probabilities` has one row per sample.
pub fn cross_entropy_cost(probabilities: &Matrix, messages: &[usize]) -> Result<f64> {
    if probabilities.nrows() != messages.len() {
        return Err(Error::Dimension {
            context: "cross-entropy labels",
            expected: probabilities.nrows(),
            actual: messages.len(),
        });
    }
    let mut floored = 0usize;
    let mut total = 0.0;
    for (row, &b) in probabilities.rows().into_iter().zip(messages) {
        let p = row[b];
        if p < LOG_FLOOR {
            floored += 1;
        }
        total -= p.max(LOG_FLOOR).ln();
    }
    if floored > 0 {
        log::warn!("{floored} samples had zero probability on the true message; log argument floored");
    }
    Ok(total / messages.len() as f64)
}

/// `F_d = (1/M) sum_b sum_i g(h(u_b))_i` for the M encoder outputs at one target.
pub fn dimming_constraint(encoder_outputs: &Matrix, offset: f64, led: &LedModel) -> f64 {
    let m = encoder_outputs.nrows() as f64;
    encoder_outputs
        .rows()
        .into_iter()
        .map(|u| {
            let h = probabilities(u.as_slice().expect("contiguous row"), offset);
            led.total_power(&h)
        })
        .sum::<f64>()
        / m
}

/// `C + sum_d lambda_d (F_d - d) + rho sum_d (F_d - d)^2`, with residuals `F_d - d`.
pub fn lagrangian(cost: f64, residuals: &[f64], duals: &DualState) -> f64 {
    let linear: f64 = duals.lambdas.iter().zip(residuals).map(|(l, r)| l * r).sum();
    let quadratic: f64 = residuals.iter().map(|r| r * r).sum();
    cost + linear + duals.rho * quadratic
}

/// `C + mu sum_d (F_d - d)^2`.
pub fn penalized_cost(cost: f64, residuals: &[f64], mu: f64) -> f64 {
    cost + mu * residuals.iter().map(|r| r * r).sum::<f64>()
}
