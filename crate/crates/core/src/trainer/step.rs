//! One mini-batch through encoder, binarizer, LED, channel and decoder, with
//! the gradients of the training objective.

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use super::method::TrainingMethod;
use super::objective::{cross_entropy_cost, DualState};
use crate::binarizer::BinarizerSpec;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::nn::{sigmoid, AdamState, Gradients, Matrix, Mode, Tape};
use crate::optics::{ChannelModel, LedModel};

/// Everything between the encoder output and the decoder input.
#[derive(Clone, Debug)]
pub struct Link {
    pub binarizer: BinarizerSpec,
    pub led: LedModel,
    pub channel: Arc<dyn ChannelModel>,
    pub noise_variance: f64,
}

impl Link {
    pub fn targets(&self) -> &[f64] {
        &self.binarizer.targets
    }
}

/// How the encoder output becomes a transmitted symbol during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binarization {
    /// Bernoulli draw with the straight-through gradient.
    Sampled,
    /// `s = h(u)`: the smooth surrogate, whose gradient is exact.
    Expectation,
}

#[derive(Clone, Debug)]
pub enum Channels {
    Shared(Matrix),
    PerRow(Vec<Matrix>),
}

impl Channels {
    pub fn get(&self, row: usize) -> &Matrix {
        match self {
            Channels::Shared(h) => h,
            Channels::PerRow(hs) => &hs[row],
        }
    }
}

/// Rows of `(message, target index)` with all randomness pre-drawn.
#[derive(Clone, Debug)]
pub struct Batch {
    pub rows: Vec<(usize, usize)>,
    pub uniforms: Matrix,
    pub noise: Matrix,
    pub channels: Channels,
}

/// `floor(B / MD)` copies of the full `(b, d)` grid when that is at least one,
/// otherwise `B` uniform draws.
pub fn stratified_rows(m: usize, targets: usize, batch_size: usize, rng: &mut dyn RngCore) -> Vec<(usize, usize)> {
    let grid = m * targets;
    let copies = batch_size / grid;
    if copies == 0 {
        return (0..batch_size)
            .map(|_| (rng.random_range(0..m), rng.random_range(0..targets)))
            .collect();
    }
    let mut rows = Vec::with_capacity(copies * grid);
    for _ in 0..copies {
        for t in 0..targets {
            for b in 0..m {
                rows.push((b, t));
            }
        }
    }
    rows
}

impl Batch {
    pub fn draw(rows: Vec<(usize, usize)>, n: usize, channel: &dyn ChannelModel, rng: &mut dyn RngCore) -> Self {
        let len = rows.len();
        let uniforms = Matrix::from_shape_simple_fn((len, n), || rng.random::<f64>());
        let noise = Matrix::from_shape_simple_fn((len, n), || StandardNormal.sample(&mut *rng));
        let channels = if channel.is_random() {
            Channels::PerRow((0..len).map(|_| channel.sample(rng)).collect())
        } else {
            Channels::Shared(channel.sample(rng))
        };
        Self {
            rows,
            uniforms,
            noise,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Objective value, constraint estimates and gradients for one batch.
#[derive(Clone, Debug)]
pub struct BatchGradients {
    pub cost: f64,
    pub objective: f64,
    /// Mini-batch estimate of `F_d`, one per target.
    pub constraint_values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub encoder: Gradients,
    pub decoder: Gradients,
    pub encoder_tape: Tape,
    pub decoder_tape: Tape,
}

/// Received vectors `H g(s) + sigma n`, one row per batch row.
pub(crate) fn channel_output(s: &Matrix, channels: &Channels, noise: &Matrix, led: &LedModel, noise_variance: f64) -> Matrix {
    let std = noise_variance.sqrt();
    let x = if led.is_linear() {
        s.clone()
    } else {
        let mut x = s.clone();
        for mut row in x.rows_mut() {
            let g = led.forward(row.as_slice().expect("contiguous row"));
            row.assign(&ndarray::ArrayView1::from(&g));
        }
        x
    };
    let mut y = match channels {
        Channels::Shared(h) => x.dot(&h.t()),
        Channels::PerRow(hs) => {
            let mut y = Matrix::zeros(x.dim());
            for (r, h) in hs.iter().enumerate() {
                y.row_mut(r).assign(&h.dot(&x.row(r)));
            }
            y
        }
    };
    y.scaled_add(std, noise);
    y
}

/// Forward and reverse pass of the training objective in train mode.
pub fn batch_gradients(
    params: &ModelParams,
    duals: &DualState,
    method: &dyn TrainingMethod,
    link: &Link,
    batch: &Batch,
    binarization: Binarization,
) -> Result<BatchGradients> {
    let n = params.n;
    let rows = batch.len();
    let targets = link.targets();
    if rows == 0 {
        return Err(Error::config("empty batch"));
    }
    let encoder_rows: Vec<(usize, f64)> = batch.rows.iter().map(|&(b, t)| (b, targets[t])).collect();
    let (u, encoder_tape) = params.encode_batch(&encoder_rows, Mode::Train)?;

    let mut h = Matrix::zeros((rows, n));
    let mut s = Matrix::zeros((rows, n));
    for (r, &(_, t)) in batch.rows.iter().enumerate() {
        let offset = link.binarizer.offset(t);
        for i in 0..n {
            let p = sigmoid(u[[r, i]] - offset);
            h[[r, i]] = p;
            s[[r, i]] = match binarization {
                Binarization::Sampled => f64::from(u8::from(batch.uniforms[[r, i]] < p)),
                Binarization::Expectation => p,
            };
        }
    }

    let y = channel_output(&s, &batch.channels, &batch.noise, &link.led, link.noise_variance);
    let dimming: Vec<f64> = encoder_rows.iter().map(|&(_, d)| d).collect();
    let csi: Option<Vec<&Matrix>> = params.csi_input.then(|| (0..rows).map(|r| batch.channels.get(r)).collect());
    let decoder_in = params.decoder_input(&y, &dimming, csi.as_deref())?;
    let (p, decoder_tape) = params.decoder.forward(&decoder_in, Mode::Train)?;
    let messages: Vec<usize> = batch.rows.iter().map(|&(b, _)| b).collect();
    let cost = cross_entropy_cost(&p, &messages)?;

    let mut d_logits = p;
    for (r, &b) in messages.iter().enumerate() {
        d_logits[[r, b]] -= 1.0;
    }
    d_logits /= rows as f64;
    let (decoder, d_decoder_in) = params.decoder.backward_logits(&decoder_tape, &d_logits)?;

    let mut counts = vec![0usize; targets.len()];
    let mut sums = vec![0.0; targets.len()];
    for (r, &(_, t)) in batch.rows.iter().enumerate() {
        counts[t] += 1;
        sums[t] += link.led.total_power(h.row(r).as_slice().expect("contiguous row"));
    }
    let constraint_values: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .zip(targets)
        .map(|((&sum, &c), &d)| if c == 0 { d } else { sum / c as f64 })
        .collect();
    let residuals: Vec<f64> = constraint_values.iter().zip(targets).map(|(f, d)| f - d).collect();
    let objective = method.objective(cost, &residuals, duals);
    let weights: Vec<f64> = residuals
        .iter()
        .zip(&duals.lambdas)
        .zip(&counts)
        .map(|((&r, &l), &c)| {
            if c == 0 {
                0.0
            } else {
                method.constraint_weight(r, l, duals.rho) / c as f64
            }
        })
        .collect();

    let ones = vec![1.0; n];
    let mut d_u = Matrix::zeros((rows, n));
    for (r, &(_, t)) in batch.rows.iter().enumerate() {
        let d_y = d_decoder_in.row(r).slice(ndarray::s![..n]).to_owned();
        let d_x = batch.channels.get(r).t().dot(&d_y);
        let s_row = s.row(r);
        let h_row = h.row(r);
        let d_s = link.led.vjp(s_row.as_slice().expect("contiguous row"), d_x.as_slice().expect("contiguous"));
        let d_f = link.led.vjp(h_row.as_slice().expect("contiguous row"), &ones);
        for i in 0..n {
            let hp = h_row[i];
            d_u[[r, i]] = (d_s[i] + weights[t] * d_f[i]) * hp * (1.0 - hp);
        }
    }
    let (encoder, _) = params.encoder.backward(&encoder_tape, &d_u)?;

    Ok(BatchGradients {
        cost,
        objective,
        constraint_values,
        residuals,
        encoder,
        decoder,
        encoder_tape,
        decoder_tape,
    })
}

/// Adam moments for the network weights and for the multipliers.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OptimizerState {
    pub weights: AdamState,
    pub multipliers: AdamState,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, targets: usize) -> Self {
        let mut sizes = params.encoder.param_sizes();
        sizes.extend(params.decoder.param_sizes());
        Self {
            weights: AdamState::new(&sizes),
            multipliers: AdamState::new(&[targets]),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StepSettings {
    pub learning_rate: f64,
    pub dual_learning_rate: f64,
    pub clamp_multipliers: bool,
}

/// Applies one consolidated update: batch-norm statistics, descent on the
/// weights and (for methods with multipliers) ascent on `lambda` along the
/// residual vector.
pub fn apply_gradients(
    params: &mut ModelParams,
    duals: &mut DualState,
    optimizer: &mut OptimizerState,
    method: &dyn TrainingMethod,
    grads: &BatchGradients,
    settings: StepSettings,
) -> Result<()> {
    if !grads.objective.is_finite() {
        return Err(Error::NonFinite {
            what: format!("training objective ({})", grads.objective),
            iteration: optimizer.weights.step_count,
        });
    }
    let mut tensors = grads.encoder.tensors();
    tensors.extend(grads.decoder.tensors());
    {
        let ModelParams { encoder, decoder, .. } = params;
        let mut slices = encoder.param_slices_mut();
        slices.extend(decoder.param_slices_mut());
        optimizer.weights.step(&mut slices, &tensors, settings.learning_rate, false)?;
    }
    params.encoder.commit(&grads.encoder_tape);
    params.decoder.commit(&grads.decoder_tape);
    params.touch();
    if method.updates_duals() {
        optimizer.multipliers.step(
            &mut [duals.lambdas.as_mut_slice()],
            &[grads.residuals.as_slice()],
            settings.dual_learning_rate,
            true,
        )?;
        if settings.clamp_multipliers {
            for l in &mut duals.lambdas {
                *l = l.max(0.0);
            }
        }
    }
    Ok(())
}
