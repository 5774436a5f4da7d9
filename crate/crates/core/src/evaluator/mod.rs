//! Monte Carlo symbol error rate measurement and report comparison.

mod compare;
mod report;

pub use compare::{compare, Comparison, DbGap, PointGap, DEFAULT_TARGET_SER};
pub use report::{AuditRow, EvalReport, EvalRow};

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::baseline::{perturb_csi, CsiModel, MlDecoder};
use crate::binarizer::BinarizerSpec;
use crate::codebook::{extract_codebook, Codebook};
use crate::error::{Error, Result};
use crate::model::{argmax, ModelParams};
use crate::nn::Matrix;
use crate::optics::{propagate, ChannelModel, ChannelSpec, LedModel};
use crate::registry::channel_model;
use crate::rng_stream;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
const MEAN_CHANNEL_DRAWS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// SNR grid in dB, non-decreasing.
    pub snr_db: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials_per_point: usize,
    /// Subset of the system's dimming targets; all targets when absent.
    #[serde(default)]
    pub dimming_set: Option<Vec<f64>>,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub led: LedModel,
    /// Receiver CSI for ML baselines.
    #[serde(default)]
    pub csi: CsiModel,
    #[serde(default)]
    pub seed: u64,
    /// Trials per independent random stream.
    #[serde(default = "default_chunk")]
    pub chunk_size: usize,
}

fn default_trials() -> usize {
    100_000
}
fn default_chunk() -> usize {
    10_000
}

impl EvalConfig {
    pub fn new(snr_db: Vec<f64>, trials_per_point: usize) -> Self {
        Self {
            snr_db,
            trials_per_point,
            dimming_set: None,
            channel: ChannelSpec::default(),
            led: LedModel::Linear,
            csi: CsiModel::Perfect,
            seed: 0,
            chunk_size: default_chunk(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("eval snr_db must be a non-empty list of finite values"));
        }
        if self.snr_db.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("eval snr_db must be sorted"));
        }
        if self.trials_per_point == 0 || self.chunk_size == 0 {
            return Err(Error::config("eval trials_per_point and chunk_size must be positive"));
        }
        if self.trials_per_point < 10_000 {
            log::warn!("{} trials per point is below 10^4; SER intervals will be wide", self.trials_per_point);
        }
        self.csi.validate()
    }
}

/// `Q(x) = P(Z > x)` for a standard normal `Z`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Noise variance for `SNR = E_s / sigma^2`. With a linear LED
/// `E_s = d / N`; otherwise `E_s` is the per-slot optical power of
/// `codebook` through `led`.
pub fn snr_to_sigma(d: f64, n: usize, snr_db: f64, led: &LedModel, codebook: Option<&Codebook>) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::domain(format!("SNR must be finite, got {snr_db}")));
    }
    let energy = if led.is_linear() {
        d / n as f64
    } else {
        let cb = codebook.ok_or_else(|| Error::domain("a nonlinear LED needs a codebook to define symbol energy"))?;
        cb.average_power(led) / n as f64
    };
    Ok(energy / 10f64.powf(snr_db / 10.0))
}

/// Inverse of [`snr_to_sigma`] for a linear LED, in dB.
pub fn sigma_to_snr_db(d: f64, n: usize, noise_variance: f64) -> f64 {
    10.0 * (d / (n as f64 * noise_variance)).log10()
}

/// Wilson score interval at 95%.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let low = if errors == 0 { 0.0 } else { (centre - half).max(0.0) };
    let high = if errors == trials { 1.0 } else { (centre + half).min(1.0) };
    (low, high)
}

/// A transmitter/receiver pair under test. Transmission always uses the
/// system's (deterministic) codebook for the chosen target.
pub trait System: Send + Sync {
    fn name(&self) -> &str;
    fn n(&self) -> usize;
    fn targets(&self) -> Vec<f64>;
    fn codebook(&self, target_index: usize) -> &Codebook;
    /// Decodes every row of `received`; `channels[r]` is the channel that
    /// row actually passed through.
    fn decode(
        &self,
        target_index: usize,
        received: &Matrix,
        channels: &[&Matrix],
        rng: &mut dyn RngCore,
    ) -> Result<Vec<usize>>;
}

/// Learned encoder (through deterministic binarization) and learned decoder.
pub struct DnnSystem {
    name: String,
    params: ModelParams,
    targets: Vec<f64>,
    codebooks: Vec<Codebook>,
}

impl DnnSystem {
    pub fn new(name: impl Into<String>, params: ModelParams, binarizer: &BinarizerSpec) -> Result<Self> {
        let codebooks = (0..binarizer.targets.len())
            .map(|t| extract_codebook(&params, binarizer, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: name.into(),
            targets: binarizer.targets.clone(),
            params,
            codebooks,
        })
    }
}

impl System for DnnSystem {
    fn name(&self) -> &str {
        &self.name
    }
    fn n(&self) -> usize {
        self.params.n
    }
    fn targets(&self) -> Vec<f64> {
        self.targets.clone()
    }
    fn codebook(&self, t: usize) -> &Codebook {
        &self.codebooks[t]
    }
    fn decode(&self, t: usize, received: &Matrix, channels: &[&Matrix], _: &mut dyn RngCore) -> Result<Vec<usize>> {
        let dimming = vec![self.targets[t]; received.nrows()];
        let csi = self.params.csi_input.then_some(channels);
        let x = self.params.decoder_input(received, &dimming, csi)?;
        let p = self.params.decoder.infer(&x)?;
        Ok(p.rows().into_iter().map(|row| argmax(row.as_slice().expect("contiguous row"))).collect())
    }
}

/// Codebooks decoded by maximum likelihood. The receiver always knows the
/// LED model; its knowledge of `H` follows `csi`.
pub struct MlSystem {
    name: String,
    codebooks: Vec<Codebook>,
    led: LedModel,
    csi: CsiModel,
    /// Decoders usable for every trial: set when the estimate does not
    /// depend on the realization.
    fixed: Option<Vec<MlDecoder>>,
}

impl MlSystem {
    /// `channel` is the model the evaluation will draw from; `rng` is used
    /// only to estimate the channel mean when `csi` is `none`.
    pub fn new(
        name: impl Into<String>,
        codebooks: Vec<Codebook>,
        led: LedModel,
        csi: CsiModel,
        channel: &dyn ChannelModel,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        csi.validate()?;
        if codebooks.is_empty() {
            return Err(Error::domain("ML system needs at least one codebook"));
        }
        if codebooks.iter().any(|c| c.n != channel.dim()) {
            return Err(Error::Dimension {
                context: "ML codebook length vs channel",
                expected: channel.dim(),
                actual: codebooks[0].n,
            });
        }
        let known = match csi {
            CsiModel::None => Some(mean_channel(channel, rng)),
            CsiModel::Perfect if !channel.is_random() => Some(channel.sample(rng)),
            _ => None,
        };
        let fixed = known
            .map(|h| codebooks.iter().map(|cb| MlDecoder::new(cb, &h, &led)).collect::<Result<Vec<_>>>())
            .transpose()?;
        Ok(Self {
            name: name.into(),
            codebooks,
            led,
            csi,
            fixed,
        })
    }
}

/// Channel-averaged matrix (exact for deterministic models).
pub fn mean_channel(channel: &dyn ChannelModel, rng: &mut dyn RngCore) -> Matrix {
    if !channel.is_random() {
        return channel.sample(rng);
    }
    let mut acc = Matrix::zeros((channel.dim(), channel.dim()));
    for _ in 0..MEAN_CHANNEL_DRAWS {
        acc += &channel.sample(rng);
    }
    acc / MEAN_CHANNEL_DRAWS as f64
}

impl System for MlSystem {
    fn name(&self) -> &str {
        &self.name
    }
    fn n(&self) -> usize {
        self.codebooks[0].n
    }
    fn targets(&self) -> Vec<f64> {
        self.codebooks.iter().map(|c| c.dimming).collect()
    }
    fn codebook(&self, t: usize) -> &Codebook {
        &self.codebooks[t]
    }
    fn decode(&self, t: usize, received: &Matrix, channels: &[&Matrix], rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        let rows = received.rows().into_iter();
        if let Some(decoders) = &self.fixed {
            return Ok(rows.map(|r| decoders[t].decode(r.as_slice().expect("contiguous row"))).collect());
        }
        rows.zip(channels)
            .map(|(r, h)| {
                let estimate = match self.csi {
                    CsiModel::Perturbed(v) => perturb_csi(h, v, rng)?,
                    _ => (*h).clone(),
                };
                let decoder = MlDecoder::new(&self.codebooks[t], &estimate, &self.led)?;
                Ok(decoder.decode(r.as_slice().expect("contiguous row")))
            })
            .collect()
    }
}

fn target_indices(system: &dyn System, config: &EvalConfig) -> Result<Vec<usize>> {
    let targets = system.targets();
    match &config.dimming_set {
        None => Ok((0..targets.len()).collect()),
        Some(wanted) => wanted
            .iter()
            .map(|&d| {
                targets.iter().position(|&t| (t - d).abs() < 1e-9).ok_or_else(|| {
                    Error::config(format!("system `{}` has no dimming target {d} (has {targets:?})", system.name()))
                })
            })
            .collect(),
    }
}

fn chunk_stream(target: usize, snr: usize, chunk: usize) -> u64 {
    ((target as u64) << 48) | ((snr as u64) << 32) | chunk as u64
}

/// Errors over `trials` transmissions of uniformly drawn messages.
#[allow(clippy::too_many_arguments)]
fn count_errors(
    system: &dyn System,
    channel: &dyn ChannelModel,
    led: &LedModel,
    t: usize,
    noise_variance: f64,
    trials: usize,
    rng: &mut dyn RngCore,
) -> Result<u64> {
    let cb = system.codebook(t);
    let (m, n) = (cb.m(), cb.n);
    let fixed = (!channel.is_random()).then(|| channel.sample(rng));
    let images: Option<Vec<Vec<f64>>> = fixed
        .as_ref()
        .map(|h| cb.codewords.iter().map(|c| propagate(&c.to_f64(), h, led)).collect());
    let std = noise_variance.sqrt();
    let mut received = Matrix::zeros((trials, n));
    let mut messages = Vec::with_capacity(trials);
    let mut drawn = Vec::new();
    for r in 0..trials {
        let b = rng.random_range(0..m);
        messages.push(b);
        let clean = match &images {
            Some(img) => img[b].clone(),
            None => {
                let h = channel.sample(rng);
                let y = propagate(&cb.codewords[b].to_f64(), &h, led);
                drawn.push(h);
                y
            }
        };
        for (i, v) in clean.into_iter().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            received[[r, i]] = v + std * z;
        }
    }
    let channels: Vec<&Matrix> = match &fixed {
        Some(h) => vec![h; trials],
        None => drawn.iter().collect(),
    };
    let decoded = system.decode(t, &received, &channels, rng)?;
    Ok(decoded.iter().zip(&messages).filter(|(a, b)| a != b).count() as u64)
}

/// SER of `system` at every `(d, SNR)` point of `config`. Each
/// `(d, SNR, chunk)` uses its own random stream, so results do not depend on
/// the number of worker threads.
pub fn measure_ser(system: &dyn System, config: &EvalConfig) -> Result<EvalReport> {
    config.validate()?;
    let n = system.n();
    let channel: Arc<dyn ChannelModel> = channel_model(&config.channel, n)?;
    let targets = system.targets();
    let indices = target_indices(system, config)?;
    let chunks = config.trials_per_point.div_ceil(config.chunk_size);
    let mut rows = Vec::new();
    let mut audits = Vec::new();
    for &t in &indices {
        let cb = system.codebook(t);
        let d = targets[t];
        audits.push(AuditRow::new(system.name(), d, cb, &config.led));
        for (s, &snr_db) in config.snr_db.iter().enumerate() {
            let sigma2 = snr_to_sigma(d, n, snr_db, &config.led, Some(cb))?;
            let errors = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let size = config.chunk_size.min(config.trials_per_point - c * config.chunk_size);
                    let mut rng = rng_stream(config.seed, chunk_stream(t, s, c));
                    count_errors(system, channel.as_ref(), &config.led, t, sigma2, size, &mut rng)
                })
                .collect::<Result<Vec<u64>>>()?
                .into_iter()
                .sum::<u64>();
            rows.push(EvalRow::new(system.name(), d, snr_db, config.trials_per_point as u64, errors));
        }
    }
    Ok(EvalReport {
        seed: config.seed,
        trials_per_point: config.trials_per_point,
        csi: config.csi.to_string(),
        channel: config.channel.model.clone(),
        rows,
        audits,
    })
}

/// Runs [`measure_ser`] for each system and concatenates the reports.
pub fn measure_all(systems: &[&dyn System], config: &EvalConfig) -> Result<EvalReport> {
    let mut out: Option<EvalReport> = None;
    for s in systems {
        let r = measure_ser(*s, config)?;
        match &mut out {
            None => out = Some(r),
            Some(o) => {
                o.rows.extend(r.rows);
                o.audits.extend(r.audits);
            }
        }
    }
    out.ok_or_else(|| Error::config("no systems to evaluate"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{load_fixture, Provenance};
    use crate::optics::IdentityChannel;

    fn antipodal(n: usize) -> Codebook {
        Codebook::new(n, n as f64 / 2.0, vec![vec![0; n], vec![1; n]], Provenance::Searched).unwrap()
    }

    fn ml(codebooks: Vec<Codebook>, channel: &ChannelSpec, csi: CsiModel) -> MlSystem {
        let ch = channel_model(channel, codebooks[0].n).unwrap();
        MlSystem::new("ml", codebooks, LedModel::Linear, csi, ch.as_ref(), &mut rng_stream(0, 0)).unwrap()
    }

    #[test]
    fn snr_substitution() {
        let s = snr_to_sigma(4.0, 8, 0.0, &LedModel::Linear, None).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
        let snr = sigma_to_snr_db(4.0, 8, 0.1);
        assert!((10f64.powf(snr / 10.0) - 5.0).abs() < 1e-12);
        assert!((snr - 6.9897).abs() < 1e-4);
        assert!(snr_to_sigma(4.0, 8, f64::NAN, &LedModel::Linear, None).is_err());
    }

    #[test]
    fn nonlinear_snr_uses_codebook_energy() {
        let led = LedModel::kingbright();
        assert!(snr_to_sigma(40.0, 8, 10.0, &led, None).is_err());
        let cb = load_fixture("IIa").unwrap();
        // direct evaluation: per-word optical power via the polynomial
        let a = crate::optics::KINGBRIGHT_COEFFICIENTS;
        let p = |x: f64| a.iter().enumerate().map(|(k, c)| c * x.powi(k as i32 + 1)).sum::<f64>();
        let mut total = 0.0;
        for w in &cb.codewords {
            let bits = w.to_f64();
            for i in 0..bits.len() {
                total += p(bits[i]) + if i > 0 { 0.1 * p(bits[i - 1]) } else { 0.0 };
            }
        }
        let es = total / cb.m() as f64 / 8.0;
        let s = snr_to_sigma(0.0, 8, 10.0, &led, Some(&cb)).unwrap();
        assert!((s - es / 10.0).abs() < 1e-12);
    }

    #[test]
    fn q_function_values() {
        assert!((q_function(0.0) - 0.5).abs() < 1e-15);
        assert!((q_function(1.4142135623730951) - 0.0786496).abs() < 1e-6);
        assert!((q_function(3.0) - 0.0013498980316301).abs() < 1e-12);
    }

    #[test]
    fn wilson_interval_brackets_estimate() {
        let (lo, hi) = wilson_interval(50, 1000);
        assert!(lo < 0.05 && 0.05 < hi);
        assert!((hi - lo - 0.0275).abs() < 0.002);
        let (lo, hi) = wilson_interval(0, 1000);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.005);
    }

    #[test]
    fn noiseless_limit_has_no_errors() {
        let cb = load_fixture("IIc").unwrap();
        let sys = ml(vec![cb], &ChannelSpec::default(), CsiModel::Perfect);
        let report = measure_ser(&sys, &EvalConfig::new(vec![80.0], 20_000)).unwrap();
        assert_eq!(report.rows[0].errors, 0);
    }

    #[test]
    fn antipodal_ser_matches_q_function() {
        let sys = ml(vec![antipodal(8)], &ChannelSpec::default(), CsiModel::Perfect);
        // sigma = 1 at SNR = 10 log10(0.5)
        let config = EvalConfig::new(vec![10.0 * 0.5f64.log10(), 0.0, 3.0], 400_000);
        let report = measure_ser(&sys, &config).unwrap();
        for row in &report.rows {
            let sigma = snr_to_sigma(4.0, 8, row.snr_db, &LedModel::Linear, None).unwrap().sqrt();
            let exact = q_function(8f64.sqrt() / (2.0 * sigma));
            // 99.9% two-sided band around the exact value
            let sd = (exact * (1.0 - exact) / row.trials as f64).sqrt();
            assert!((row.ser - exact).abs() <= 3.29 * sd, "{row:?} vs {exact}");
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let cb = load_fixture("IIa").unwrap();
        let sys = ml(vec![cb], &ChannelSpec::default(), CsiModel::Perfect);
        let config = EvalConfig::new(vec![0.0, 4.0], 30_000);
        let a = measure_ser(&sys, &config).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| measure_ser(&sys, &config).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn ml_ser_is_monotone_in_snr() {
        let cb = load_fixture("IIc").unwrap();
        let sys = ml(vec![cb], &ChannelSpec::default(), CsiModel::Perfect);
        let report = measure_ser(&sys, &EvalConfig::new(vec![-2.0, 0.0, 2.0, 4.0, 6.0], 20_000)).unwrap();
        for w in report.rows.windows(2) {
            assert!(w[1].ser <= w[0].ser || w[1].ci_low <= w[0].ci_high);
        }
    }

    #[test]
    fn random_isi_perturbed_csi_is_no_better_than_perfect() {
        let cb = load_fixture("IIa").unwrap();
        let spec = ChannelSpec {
            model: "isi-random".into(),
            ..ChannelSpec::default()
        };
        let config = EvalConfig {
            channel: spec.clone(),
            ..EvalConfig::new(vec![6.0], 20_000)
        };
        let perfect = measure_ser(&ml(vec![cb.clone()], &spec, CsiModel::Perfect), &config).unwrap();
        let perturbed = measure_ser(&ml(vec![cb.clone()], &spec, CsiModel::Perturbed(0.05)), &config).unwrap();
        let none = measure_ser(&ml(vec![cb], &spec, CsiModel::None), &config).unwrap();
        assert!(perfect.rows[0].errors <= perturbed.rows[0].errors);
        assert!(perfect.rows[0].errors <= none.rows[0].errors);
    }

    #[test]
    fn mean_channel_of_identity_is_identity() {
        let h = mean_channel(&IdentityChannel::new(4), &mut rng_stream(0, 0));
        assert_eq!(h, Matrix::eye(4));
    }

    #[test]
    fn unknown_dimming_target_is_rejected() {
        let sys = ml(vec![antipodal(4)], &ChannelSpec::default(), CsiModel::Perfect);
        let config = EvalConfig {
            dimming_set: Some(vec![1.0]),
            ..EvalConfig::new(vec![0.0], 100)
        };
        assert!(matches!(measure_ser(&sys, &config), Err(Error::Config(_))));
    }
}
