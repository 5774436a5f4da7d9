//! Name-to-factory tables for the interchangeable strategies: training
//! methods, channel models and (in [`crate::baseline`]) search constraints.

use std::sync::Arc;

use crate::config::TrainingConfig;
use crate::error::{Error, Result};
use crate::optics::{ChannelModel, ChannelSpec, FixedChannel, IdentityChannel, IsiChannel};
use crate::trainer::{Penalty, PrimalDual, TrainingMethod};

/// Ordered list of named factories.
pub struct Registry<F> {
    kind: &'static str,
    entries: Vec<(&'static str, F)>,
}

impl<F> Registry<F> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Adds a factory; a later registration under the same name replaces the
    /// earlier one.
    pub fn register(&mut self, name: &'static str, factory: F) -> &mut Self {
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, factory));
        self
    }

    pub fn get(&self, name: &str) -> Result<&F> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, f)| f)
            .ok_or_else(|| Error::UnknownName {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }
}

pub type MethodFactory = fn(&TrainingConfig) -> Result<Box<dyn TrainingMethod>>;
pub type ChannelFactory = fn(&ChannelSpec, usize) -> Result<Arc<dyn ChannelModel>>;

pub fn training_methods() -> Registry<MethodFactory> {
    let mut r: Registry<MethodFactory> = Registry::new("training method");
    r.register("primal-dual", |_| Ok(Box::new(PrimalDual)));
    r.register("penalty", |t| {
        if !(t.penalty_mu >= 0.0 && t.penalty_mu.is_finite()) {
            return Err(Error::config(format!("penalty_mu must be >= 0, got {}", t.penalty_mu)));
        }
        Ok(Box::new(Penalty { mu: t.penalty_mu }))
    });
    r
}

pub fn channel_models() -> Registry<ChannelFactory> {
    let mut r: Registry<ChannelFactory> = Registry::new("channel model");
    r.register("identity", |_, n| Ok(Arc::new(IdentityChannel::new(n))));
    r.register("fixed", |spec, n| {
        let h = spec.fixed_matrix()?;
        if h.nrows() != n {
            return Err(Error::Dimension {
                context: "fixed channel size",
                expected: n,
                actual: h.nrows(),
            });
        }
        Ok(Arc::new(FixedChannel::new(h)?))
    });
    r.register("isi-random", |spec, n| Ok(Arc::new(IsiChannel::new(n, spec.isi_delay_mode))));
    r
}

pub fn training_method(config: &TrainingConfig) -> Result<Box<dyn TrainingMethod>> {
    training_methods().get(&config.method)?(config)
}

pub fn channel_model(spec: &ChannelSpec, n: usize) -> Result<Arc<dyn ChannelModel>> {
    channel_models().get(&spec.model)?(spec, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_names_resolve() {
        let cfg = TrainingConfig::default();
        assert_eq!(training_method(&cfg).unwrap().name(), "primal-dual");
        let pen = TrainingConfig {
            method: "penalty".into(),
            ..TrainingConfig::default()
        };
        assert_eq!(training_method(&pen).unwrap().name(), "penalty");
        for name in ["identity", "isi-random"] {
            let spec = ChannelSpec {
                model: name.into(),
                ..ChannelSpec::default()
            };
            let ch = channel_model(&spec, 8).unwrap();
            assert_eq!(ch.name(), name);
            assert_eq!(ch.dim(), 8);
        }
    }

    #[test]
    fn unknown_name_lists_alternatives() {
        let cfg = TrainingConfig {
            method: "sgd".into(),
            ..TrainingConfig::default()
        };
        let err = training_method(&cfg).unwrap_err().to_string();
        assert!(err.contains("sgd") && err.contains("primal-dual") && err.contains("penalty"), "{err}");
    }

    #[test]
    fn fixed_channel_size_is_checked() {
        let spec = ChannelSpec {
            model: "fixed".into(),
            matrix: Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            ..ChannelSpec::default()
        };
        assert!(channel_model(&spec, 2).is_ok());
        assert!(channel_model(&spec, 3).is_err());
    }

    #[test]
    fn re_registration_replaces() {
        let mut r: Registry<u8> = Registry::new("thing");
        r.register("a", 1).register("b", 2).register("a", 3);
        assert_eq!(r.names(), vec!["b", "a"]);
        assert_eq!(*r.get("a").unwrap(), 3);
    }
}
