//! Versioned JSON container for a trained transceiver.
//!
//! Floats are written with shortest round-trip formatting, so a save/load
//! cycle reproduces every weight bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binarizer::BinarizerSpec;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::trainer::{DualState, TrainOutcome};

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: u32,
    pub seed: u64,
    /// Iteration the parameters were captured at.
    pub iteration: Option<u64>,
    pub feasible: bool,
    pub config: TrainConfig,
    pub binarizer: BinarizerSpec,
    pub params: ModelParams,
    pub duals: DualState,
}

impl Checkpoint {
    pub fn from_outcome(config: &TrainConfig, outcome: &TrainOutcome) -> Self {
        Self {
            format: CHECKPOINT_FORMAT,
            seed: config.seed,
            iteration: outcome.report.best_iteration,
            feasible: outcome.report.feasible,
            config: config.clone(),
            binarizer: outcome.binarizer.clone(),
            params: outcome.params.clone(),
            duals: outcome.duals.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: u32,
        }
        let header: Header = serde_json::from_str(text).map_err(|e| Error::Serde(format!("checkpoint header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::Serde(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_FORMAT})",
                header.format
            )));
        }
        let cp: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Serde(format!("checkpoint: {e}")))?;
        cp.params.validate()?;
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
