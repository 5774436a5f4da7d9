//! LED transfer models, optical channel matrices and additive Gaussian noise.

mod channel;
mod isi;
mod led;

pub use channel::{
    load_matrix, parse_matrix, ChannelModel, ChannelSpec, FixedChannel, IdentityChannel, IsiChannel,
};
pub use isi::{make_isi_channel, sample_geometry, toeplitz_two_tap, DelayMode, IsiGeometry, BIT_INTERVAL, SPEED_OF_LIGHT};
pub use led::{LedJacobian, LedModel, KINGBRIGHT_COEFFICIENTS, KINGBRIGHT_MEMORY};

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::Matrix;

/// `H g(s)` for a single word.
pub fn propagate(s: &[f64], h: &Matrix, led: &LedModel) -> Vec<f64> {
    let x = led.forward(s);
    h.rows().into_iter().map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum()).collect()
}

/// `r = H g(s) + n` with `n ~ N(0, noise_variance I)`.
pub fn transmit_through(s: &[u8], h: &Matrix, led: &LedModel, noise_variance: f64, rng: &mut dyn RngCore) -> Vec<f64> {
    let s: Vec<f64> = s.iter().map(|&b| f64::from(b)).collect();
    let std = noise_variance.max(0.0).sqrt();
    let mut r = propagate(&s, h, led);
    if std > 0.0 {
        for v in &mut r {
            let z: f64 = StandardNormal.sample(rng);
            *v += std * z;
        }
    }
    r
}

/// Draws a channel realization from `channel` and transmits `s` through it.
/// Returns the received vector and the realization used.
pub fn transmit(
    s: &[u8],
    channel: &dyn ChannelModel,
    led: &LedModel,
    noise_variance: f64,
    rng: &mut dyn RngCore,
) -> (Vec<f64>, Matrix) {
    let h = channel.sample(rng);
    let r = transmit_through(s, &h, led, noise_variance, rng);
    (r, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_identity_linear_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ch = IdentityChannel::new(6);
        let s = [1, 0, 1, 1, 0, 0];
        let (r, _) = transmit(&s, &ch, &LedModel::Linear, 0.0, &mut rng);
        assert_eq!(r, vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let ch = IsiChannel::new(8, DelayMode::Literal);
        let s = [1, 0, 1, 1, 0, 0, 1, 0];
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            transmit(&s, &ch, &LedModel::kingbright(), 0.3, &mut rng)
        };
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
    }

    #[test]
    fn noise_variance_is_calibrated() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = Matrix::eye(8);
        let sigma2 = 0.37;
        let words = 125_000; // 10^6 noise samples
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..words {
            let r = transmit_through(&[0; 8], &h, &LedModel::Linear, sigma2, &mut rng);
            for v in r {
                sum += v;
                sum_sq += v * v;
            }
        }
        let count = (words * 8) as f64;
        let var = sum_sq / count - (sum / count).powi(2);
        assert!((var / sigma2 - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn channel_application_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (h, _) = make_isi_channel(1.3, 8, DelayMode::Literal).unwrap();
        for _ in 0..20 {
            let a: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let alpha = rng.random_range(-2.0..2.0);
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect();
            let lhs = propagate(&mix, &h, &LedModel::Linear);
            let ha = propagate(&a, &h, &LedModel::Linear);
            let hb = propagate(&b, &h, &LedModel::Linear);
            for i in 0..8 {
                assert!((lhs[i] - (alpha * ha[i] + hb[i])).abs() < 1e-12);
            }
        }
    }
}
