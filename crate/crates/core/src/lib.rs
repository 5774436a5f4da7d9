//! Learned dimmable on-off keying transceivers for visible light links.
//!
//! An encoder network maps a message and a dimming target to a binary
//! codeword, a decoder network recovers the message from the noisy optical
//! channel output, and training enforces every dimming target through
//! multiplier (dual) variables updated alongside the network weights.
//!
//! - [`nn`]: dense layers, batch normalization, reverse mode, Adam
//! - [`binarizer`]: stochastic / deterministic binarization and the
//!   straight-through gradient
//! - [`optics`]: LED transfer models, channel matrices, noise
//! - [`trainer`]: cost, dimming constraints, Lagrangian, training loop
//! - [`codebook`]: codebook extraction, audit, file format, fixtures
//! - [`baseline`]: constant-weight code search and ML decoding
//! - [`evaluator`]: Monte Carlo symbol error rates and comparisons
//! - [`checkpoint`]: versioned model files
//! - [`registry`]: named lookup of the interchangeable strategies

pub mod baseline;
pub mod binarizer;
pub mod checkpoint;
pub mod codebook;
pub mod config;
pub mod error;
pub mod evaluator;
pub mod model;
pub mod nn;
pub mod optics;
pub mod registry;
pub mod trainer;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random stream `stream` derived from `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
