//! Run configuration (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ArchitecturePreset;
use crate::optics::{ChannelSpec, LedModel};

/// Documented default configuration, as emitted by `--print-default-config`.
pub const DEFAULT_CONFIG_TOML: &str = r#"# ookdim training configuration.
# Every key below shows its default value.

# Seed for parameter initialisation, training batches and the validation set.
seed = 1

[code]
# Codeword length N.
n = 8
# Number of messages M (M = 2^k).
m = 4
# Dimming targets, strictly increasing, each in (0, N). For a Hammerstein
# LED the targets are average optical power per codeword.
dimming_set = [2.0, 2.5, 3.0, 3.5, 4.0]

[architecture]
# three-layer (2M^2, M^2, M^2/2), four-layer (24M^2, 12M^2, 12M^2, 6M^2),
# five-layer (32M^2, 16M^2, 8M^2, 4M^2, M^2) or { custom = [w1, w2, ...] }.
# The decoder mirrors the encoder.
preset = "three-layer"
# Batch normalization on every hidden layer.
batch_norm = true

[training]
# Registered training method: "primal-dual" or "penalty".
method = "primal-dual"
# Penalty weight, used by the "penalty" method only.
penalty_mu = 0.5
# Quadratic augmentation weight of the Lagrangian.
rho = 3e-6
learning_rate = 1e-3
# Step size for the multipliers; defaults to learning_rate when absent.
# dual_learning_rate = 1e-3
# Project the multipliers onto [0, inf) after every update.
clamp_multipliers = false
batch_size = 500
# Training samples per epoch; defaults to 500000 * M when absent.
# train_samples = 2000000
epochs = 1
validation_samples = 20000
# Validate (and possibly checkpoint) every this many mini-batches.
validation_cadence = 100
# A codebook set is feasible when every |average weight - d| is at most this.
feasibility_tolerance = 0.05
# Channel noise variance used for training and validation.
noise_variance = 0.1
# Half-width B of the assumed encoder output range [-B, B].
range_bound = 4.0

[decoder]
# "none" or "perfect" (append vec(H) to the decoder input).
csi = "none"

[channel]
# Registered channel model: "identity", "fixed" or "isi-random".
model = "identity"
# For "fixed": matrix_file = "h.txt" or matrix = [[1.0, 0.0], [0.0, 1.0]]
# For "isi-random": "literal" or "fractional" use of the reflection delay ratio.
isi_delay_mode = "literal"

[led]
# "linear", or "hammerstein" with coefficients and memory, e.g.
# kind = "hammerstein"
# coefficients = [34.11, -29.99, 6.999, -0.1468]
# memory = 0.1
kind = "linear"
"#;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    pub n: usize,
    pub m: usize,
    pub dimming_set: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    #[serde(default = "default_preset")]
    pub preset: ArchitecturePreset,
    #[serde(default = "yes")]
    pub batch_norm: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_mu")]
    pub penalty_mu: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_learning_rate: Option<f64>,
    #[serde(default)]
    pub clamp_multipliers: bool,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_samples: Option<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_validation_samples")]
    pub validation_samples: usize,
    #[serde(default = "default_cadence")]
    pub validation_cadence: usize,
    #[serde(default = "default_tolerance")]
    pub feasibility_tolerance: f64,
    #[serde(default = "default_noise")]
    pub noise_variance: f64,
    #[serde(default = "default_range_bound")]
    pub range_bound: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderCsi {
    #[default]
    None,
    Perfect,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    #[serde(default)]
    pub csi: DecoderCsi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub code: CodeConfig,
    #[serde(default)]
    pub architecture: ArchitectureConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub decoder: DecoderConfig,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub led: LedModel,
}

fn yes() -> bool {
    true
}
fn default_preset() -> ArchitecturePreset {
    ArchitecturePreset::ThreeLayer
}
fn default_method() -> String {
    "primal-dual".into()
}
fn default_mu() -> f64 {
    0.5
}
fn default_rho() -> f64 {
    3e-6
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    500
}
fn default_epochs() -> usize {
    1
}
fn default_validation_samples() -> usize {
    20_000
}
fn default_cadence() -> usize {
    100
}
fn default_tolerance() -> f64 {
    0.05
}
fn default_noise() -> f64 {
    0.1
}
fn default_range_bound() -> f64 {
    crate::binarizer::DEFAULT_RANGE_BOUND
}
fn default_seed() -> u64 {
    1
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            preset: default_preset(),
            batch_norm: true,
        }
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            method: default_method(),
            penalty_mu: default_mu(),
            rho: default_rho(),
            learning_rate: default_lr(),
            dual_learning_rate: None,
            clamp_multipliers: false,
            batch_size: default_batch(),
            train_samples: None,
            epochs: default_epochs(),
            validation_samples: default_validation_samples(),
            validation_cadence: default_cadence(),
            feasibility_tolerance: default_tolerance(),
            noise_variance: default_noise(),
            range_bound: default_range_bound(),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            code: CodeConfig {
                n: 8,
                m: 4,
                dimming_set: vec![2.0, 2.5, 3.0, 3.5, 4.0],
            },
            architecture: ArchitectureConfig::default(),
            training: TrainingConfig::default(),
            decoder: DecoderConfig::default(),
            channel: ChannelSpec::default(),
            led: LedModel::Linear,
        }
    }
}

impl TrainingConfig {
    pub fn dual_learning_rate(&self) -> f64 {
        self.dual_learning_rate.unwrap_or(self.learning_rate)
    }
}

impl TrainConfig {
    /// Parses and validates a TOML document. Syntax and schema errors carry
    /// the offending line.
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1)).unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn train_samples(&self) -> usize {
        self.training.train_samples.unwrap_or(500_000 * self.code.m)
    }

    /// Mini-batch updates over the whole run.
    pub fn iterations(&self) -> u64 {
        let per_epoch = self.train_samples().div_ceil(self.training.batch_size.max(1));
        (per_epoch * self.training.epochs) as u64
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.code;
        let t = &self.training;
        if c.n == 0 {
            return Err(Error::config("code.n must be positive"));
        }
        if c.m < 2 {
            return Err(Error::config("code.m must be at least 2"));
        }
        if c.dimming_set.is_empty() {
            return Err(Error::config("code.dimming_set must not be empty"));
        }
        if c.dimming_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("code.dimming_set must be strictly increasing"));
        }
        let linear = self.led.is_linear();
        for &d in &c.dimming_set {
            let upper = if linear { c.n as f64 } else { c.n as f64 * self.led.on_power() };
            if !(d > 0.0 && d < upper) {
                return Err(Error::config(format!(
                    "code.dimming_set entry {d} must lie strictly between 0 and {upper}"
                )));
            }
        }
        let positive = [
            ("training.learning_rate", t.learning_rate),
            ("training.noise_variance", t.noise_variance),
            ("training.range_bound", t.range_bound),
            ("training.feasibility_tolerance", t.feasibility_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("training.rho", t.rho), ("training.penalty_mu", t.penalty_mu), ("training.dual_learning_rate", t.dual_learning_rate())] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if t.batch_size == 0 || t.epochs == 0 || t.validation_cadence == 0 || t.validation_samples == 0 {
            return Err(Error::config(
                "training.batch_size, epochs, validation_cadence and validation_samples must be positive",
            ));
        }
        if self.decoder.csi == DecoderCsi::Perfect && self.channel.model == "identity" {
            log::info!("perfect-CSI decoder on the identity channel receives a constant CSI input");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_default_parses_to_default() {
        let parsed = TrainConfig::from_toml(DEFAULT_CONFIG_TOML, Path::new("default.toml")).unwrap();
        assert_eq!(parsed, TrainConfig::default());
        assert_eq!(parsed.train_samples(), 2_000_000);
    }

    #[test]
    fn serialized_config_round_trips() {
        let mut cfg = TrainConfig::default();
        cfg.led = LedModel::kingbright();
        cfg.code.dimming_set = vec![20.0, 40.0];
        cfg.architecture.preset = ArchitecturePreset::Custom(vec![16, 8]);
        let text = cfg.to_toml().unwrap();
        assert_eq!(TrainConfig::from_toml(&text, Path::new("x")).unwrap(), cfg);
    }

    #[test]
    fn missing_dimming_set_names_the_field() {
        let text = "seed = 3\n[code]\nn = 8\nm = 4\n";
        let err = TrainConfig::from_toml(text, Path::new("c.toml")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dimming_set"), "{msg}");
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn bad_value_reports_its_line() {
        let text = "[code]\nn = 8\nm = 4\ndimming_set = [2.0]\n[training]\nbatch_size = \"big\"\n";
        match TrainConfig::from_toml(text, Path::new("c.toml")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dimming_set_must_increase_and_fit() {
        let mut cfg = TrainConfig::default();
        cfg.code.dimming_set = vec![3.0, 2.0];
        assert!(cfg.validate().is_err());
        cfg.code.dimming_set = vec![0.0, 2.0];
        assert!(cfg.validate().is_err());
        cfg.code.dimming_set = vec![2.0, 8.0];
        assert!(cfg.validate().is_err());
    }
}
