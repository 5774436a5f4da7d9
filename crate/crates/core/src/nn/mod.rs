//! Dense feed-forward networks with tape-based reverse mode, batch
//! normalization and Adam.
//!
//! The networks here are fixed layer chains, so a full autodiff graph is not
//! needed: every forward pass records a [`Tape`] with the per-layer
//! activations and [`Network::backward`] replays it in reverse.

mod adam;
mod arch;
mod batchnorm;
mod layer;
mod network;

pub use adam::AdamState;
pub use arch::{decoder_specs, encoder_specs, ArchitecturePreset};
pub use batchnorm::{BatchNorm, BnCache, BN_EPSILON, BN_MOMENTUM};
pub use layer::{Activation, Dense, LayerCache, LayerGrads, LayerSpec};
pub use network::{Gradients, Network, Tape};

use ndarray::{Array1, Array2, Axis};

/// Row-major dense matrix of 64-bit reals. Batches are stored one sample per row.
pub type Matrix = Array2<f64>;
pub type Vector = Array1<f64>;

/// Whether a forward pass uses batch statistics (and may be committed to the
/// running averages) or the stored running averages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}
