//! Constrained training: the Lagrangian objective, primal-dual and penalty
//! updates, and the feasibility-gated checkpoint loop.

mod method;
mod objective;
mod step;

pub use method::{Penalty, PrimalDual, TrainingMethod};
pub use objective::{cross_entropy_cost, dimming_constraint, lagrangian, penalized_cost, DualState, LOG_FLOOR};
pub use step::{
    apply_gradients, batch_gradients, stratified_rows, Batch, BatchGradients, Binarization, Channels, Link,
    OptimizerState, StepSettings,
};

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::binarizer::BinarizerSpec;
use crate::codebook::{extract_codebook, Codebook};
use crate::config::{DecoderCsi, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{argmax, ModelParams};
use crate::nn::Matrix;
use crate::optics::LedModel;
use crate::{registry, rng_stream};

const INIT_STREAM: u64 = 1;
const DATA_STREAM: u64 = 2;
const VALIDATION_STREAM: u64 = 3;

/// Binarizer duty cycles: `d / N` for an ideal LED, `d / (N p_on)` when the
/// targets are optical power and one "on" slot delivers `p_on`.
pub fn duty_cycles(targets: &[f64], n: usize, led: &LedModel) -> Vec<f64> {
    let scale = n as f64 * led.on_power();
    targets.iter().map(|d| d / scale).collect()
}

pub fn build_link(config: &TrainConfig) -> Result<Link> {
    let c = &config.code;
    let binarizer = BinarizerSpec::new(
        &c.dimming_set,
        &duty_cycles(&c.dimming_set, c.n, &config.led),
        config.training.range_bound,
    )?;
    Ok(Link {
        binarizer,
        led: config.led.clone(),
        channel: registry::channel_model(&config.channel, c.n)?,
        noise_variance: config.training.noise_variance,
    })
}

/// Deterministic dimming metric of a codebook: its average weight for an
/// ideal LED, its average optical power otherwise.
pub fn feasibility_metric(codebook: &Codebook, led: &LedModel) -> f64 {
    codebook.average_power(led)
}

/// Fixed held-out rows with their noise and channel draws.
#[derive(Clone, Debug)]
pub struct ValidationSet {
    pub rows: Vec<(usize, usize)>,
    pub noise: Matrix,
    pub channels: Channels,
}

impl ValidationSet {
    pub fn draw(samples: usize, m: usize, link: &Link, n: usize, rng: &mut ChaCha8Rng) -> Self {
        let targets = link.targets().len();
        let rows: Vec<(usize, usize)> = (0..samples).map(|_| (rng.random_range(0..m), rng.random_range(0..targets))).collect();
        let noise = Matrix::from_shape_simple_fn((samples, n), || StandardNormal.sample(rng));
        let channels = if link.channel.is_random() {
            Channels::PerRow((0..samples).map(|_| link.channel.sample(rng)).collect())
        } else {
            Channels::Shared(link.channel.sample(rng))
        };
        Self { rows, noise, channels }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: u64,
    pub cost: f64,
    pub lagrangian: f64,
    pub residuals: Vec<f64>,
    pub lambdas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub iteration: u64,
    pub cost: f64,
    pub lagrangian: f64,
    pub symbol_error_rate: f64,
    /// Deterministic-codebook dimming metric per target.
    pub constraint_values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub feasible: bool,
    pub accepted: bool,
}

impl ValidationRecord {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |a, r| a.max(r.abs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptedCheckpoint {
    pub iteration: u64,
    pub lagrangian: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub method: String,
    pub seed: u64,
    pub iterations: u64,
    /// Per-iteration trace; written separately as CSV.
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
    pub validations: Vec<ValidationRecord>,
    pub accepted: Vec<AcceptedCheckpoint>,
    /// Validation Lagrangian of the returned checkpoint.
    pub best_lagrangian: Option<f64>,
    /// Validation cross-entropy of the returned checkpoint.
    pub best_cost: Option<f64>,
    pub best_iteration: Option<u64>,
    pub feasible: bool,
    pub final_residuals: Vec<f64>,
    pub aborted: Option<String>,
    /// Lives in the run manifest, not in the report file.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

/// Hooks for streaming progress out of a run.
pub trait TrainObserver {
    fn on_step(&mut self, _row: &TraceRow) -> Result<()> {
        Ok(())
    }
    fn on_validation(&mut self, _record: &ValidationRecord) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct Silent;
impl TrainObserver for Silent {}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub duals: DualState,
    pub binarizer: BinarizerSpec,
    pub report: TrainReport,
}

#[derive(Clone, Debug)]
struct Snapshot {
    params: ModelParams,
    duals: DualState,
    record: ValidationRecord,
}

/// Training state that advances one mini-batch at a time.
pub struct Trainer {
    pub config: TrainConfig,
    pub link: Link,
    pub method: Box<dyn TrainingMethod>,
    pub params: ModelParams,
    pub duals: DualState,
    pub optimizer: OptimizerState,
    pub iteration: u64,
    pub binarization: Binarization,
    data_rng: ChaCha8Rng,
    validation: ValidationSet,
}

impl Trainer {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let c = &config.code;
        let link = build_link(config)?;
        let method = registry::training_method(&config.training)?;
        let mut init = rng_stream(config.seed, INIT_STREAM);
        let params = ModelParams::new(
            &config.architecture.preset,
            c.m,
            c.n,
            config.decoder.csi == DecoderCsi::Perfect,
            config.architecture.batch_norm,
            &mut init,
        )?;
        let duals = DualState::new(&c.dimming_set, config.training.rho);
        let optimizer = OptimizerState::new(&params, c.dimming_set.len());
        let mut vrng = rng_stream(config.seed, VALIDATION_STREAM);
        let validation = ValidationSet::draw(config.training.validation_samples, c.m, &link, c.n, &mut vrng);
        Ok(Self {
            config: config.clone(),
            link,
            method,
            params,
            duals,
            optimizer,
            iteration: 0,
            binarization: Binarization::Sampled,
            data_rng: rng_stream(config.seed, DATA_STREAM),
            validation,
        })
    }

    pub fn settings(&self) -> StepSettings {
        StepSettings {
            learning_rate: self.config.training.learning_rate,
            dual_learning_rate: self.config.training.dual_learning_rate(),
            clamp_multipliers: self.config.training.clamp_multipliers,
        }
    }

    pub fn draw_batch(&mut self) -> Batch {
        let c = &self.config.code;
        let rows = stratified_rows(c.m, c.dimming_set.len(), self.config.training.batch_size, &mut self.data_rng);
        Batch::draw(rows, c.n, self.link.channel.as_ref(), &mut self.data_rng)
    }

    /// Draws a batch and applies one update. The trace row reports the
    /// objective before the update.
    pub fn step(&mut self) -> Result<TraceRow> {
        let batch = self.draw_batch();
        let grads = batch_gradients(&self.params, &self.duals, self.method.as_ref(), &self.link, &batch, self.binarization)?;
        self.iteration += 1;
        let row = TraceRow {
            iteration: self.iteration,
            cost: grads.cost,
            lagrangian: grads.objective,
            residuals: grads.residuals.clone(),
            lambdas: self.duals.lambdas.clone(),
        };
        let settings = self.settings();
        apply_gradients(&mut self.params, &mut self.duals, &mut self.optimizer, self.method.as_ref(), &grads, settings)
            .map_err(|e| match e {
                Error::NonFinite { what, .. } => Error::NonFinite {
                    what,
                    iteration: self.iteration,
                },
                other => other,
            })?;
        if !(self.params.encoder.is_finite() && self.params.decoder.is_finite()) {
            return Err(Error::NonFinite {
                what: "network parameters".into(),
                iteration: self.iteration,
            });
        }
        Ok(row)
    }

    pub fn codebooks(&self) -> Result<Vec<Codebook>> {
        (0..self.link.targets().len())
            .map(|t| extract_codebook(&self.params, &self.link.binarizer, t))
            .collect()
    }

    /// Evaluation-mode pass over the validation set with deterministic
    /// codebooks.
    pub fn validate(&self) -> Result<ValidationRecord> {
        validate(
            &self.params,
            &self.duals,
            self.method.as_ref(),
            &self.link,
            &self.validation,
            self.config.training.feasibility_tolerance,
            self.iteration,
        )
    }

    /// Runs the remaining iterations and returns the selected checkpoint.
    pub fn run(mut self, observer: &mut dyn TrainObserver) -> Result<TrainOutcome> {
        let start = Instant::now();
        let total = self.config.iterations();
        let cadence = self.config.training.validation_cadence.max(1) as u64;
        let mut report = TrainReport {
            method: self.method.name().to_string(),
            seed: self.config.seed,
            iterations: total,
            ..TrainReport::default()
        };
        let mut best: Option<Snapshot> = None;
        let mut fallback: Option<Snapshot> = None;
        while self.iteration < total {
            let row = match self.step() {
                Ok(row) => row,
                Err(e @ Error::NonFinite { .. }) => {
                    log::error!("aborting: {e}");
                    report.aborted = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            };
            observer.on_step(&row)?;
            report.trace.push(row);
            if self.iteration % cadence == 0 || self.iteration == total {
                let mut record = self.validate()?;
                let l_best = best.as_ref().map(|s| s.record.lagrangian);
                if record.feasible && l_best.is_none_or(|l| record.lagrangian <= l) {
                    record.accepted = true;
                    report.accepted.push(AcceptedCheckpoint {
                        iteration: record.iteration,
                        lagrangian: record.lagrangian,
                    });
                    best = Some(self.snapshot(&record));
                }
                if best.is_none() {
                    let better = fallback.as_ref().is_none_or(|s| {
                        (record.max_residual(), record.lagrangian) < (s.record.max_residual(), s.record.lagrangian)
                    });
                    if better {
                        fallback = Some(self.snapshot(&record));
                    }
                }
                log::debug!(
                    "iteration {} cost {:.5} L {:.5} ser {:.4} max|r| {:.4}{}",
                    record.iteration,
                    record.cost,
                    record.lagrangian,
                    record.symbol_error_rate,
                    record.max_residual(),
                    if record.accepted { " *" } else { "" }
                );
                observer.on_validation(&record)?;
                report.validations.push(record);
            }
        }
        report.feasible = best.is_some();
        let chosen = match best.or(fallback) {
            Some(s) => s,
            None => {
                let record = self.validate()?;
                self.snapshot(&record)
            }
        };
        if !report.feasible {
            log::warn!(
                "no feasible iterate within {} iterations; returning the least-violating one (max |F - d| = {:.4})",
                self.iteration,
                chosen.record.max_residual()
            );
        }
        report.best_lagrangian = Some(chosen.record.lagrangian);
        report.best_cost = Some(chosen.record.cost);
        report.best_iteration = Some(chosen.record.iteration);
        report.final_residuals = chosen.record.residuals.clone();
        report.wall_clock_seconds = start.elapsed().as_secs_f64();
        Ok(TrainOutcome {
            params: chosen.params,
            duals: chosen.duals,
            binarizer: self.link.binarizer.clone(),
            report,
        })
    }

    fn snapshot(&self, record: &ValidationRecord) -> Snapshot {
        Snapshot {
            params: self.params.clone(),
            duals: self.duals.clone(),
            record: record.clone(),
        }
    }
}

/// Full training run with feasibility-gated checkpointing.
pub fn train(config: &TrainConfig, observer: &mut dyn TrainObserver) -> Result<TrainOutcome> {
    Trainer::new(config)?.run(observer)
}

pub fn validate(
    params: &ModelParams,
    duals: &DualState,
    method: &dyn TrainingMethod,
    link: &Link,
    set: &ValidationSet,
    tolerance: f64,
    iteration: u64,
) -> Result<ValidationRecord> {
    let targets = link.targets();
    let codebooks = (0..targets.len())
        .map(|t| extract_codebook(params, &link.binarizer, t))
        .collect::<Result<Vec<_>>>()?;
    let constraint_values: Vec<f64> = codebooks.iter().map(|cb| feasibility_metric(cb, &link.led)).collect();
    let residuals: Vec<f64> = constraint_values.iter().zip(targets).map(|(f, d)| f - d).collect();
    let feasible = residuals.iter().all(|r| r.abs() <= tolerance);

    let (cost, ser) = if set.rows.is_empty() {
        (0.0, 0.0)
    } else {
        let n = params.n;
        let mut s = Matrix::zeros((set.rows.len(), n));
        for (r, &(b, t)) in set.rows.iter().enumerate() {
            for (i, &bit) in codebooks[t].codewords[b].bits().iter().enumerate() {
                s[[r, i]] = f64::from(bit);
            }
        }
        let y = step::channel_output(&s, &set.channels, &set.noise, &link.led, link.noise_variance);
        let dimming: Vec<f64> = set.rows.iter().map(|&(_, t)| targets[t]).collect();
        let csi: Option<Vec<&Matrix>> = params.csi_input.then(|| (0..set.rows.len()).map(|r| set.channels.get(r)).collect());
        let x = params.decoder_input(&y, &dimming, csi.as_deref())?;
        let p = params.decoder.infer(&x)?;
        let messages: Vec<usize> = set.rows.iter().map(|&(b, _)| b).collect();
        let cost = cross_entropy_cost(&p, &messages)?;
        let errors = p
            .rows()
            .into_iter()
            .zip(&messages)
            .filter(|(row, &b)| argmax(row.as_slice().expect("contiguous row")) != b)
            .count();
        (cost, errors as f64 / messages.len() as f64)
    };
    Ok(ValidationRecord {
        iteration,
        cost,
        lagrangian: method.objective(cost, &residuals, duals),
        symbol_error_rate: ser,
        constraint_values,
        residuals,
        feasible,
        accepted: false,
    })
}
