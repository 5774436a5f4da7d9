use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::wilson_interval;
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::optics::LedModel;

/// One `(system, d, SNR)` measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub system: String,
    pub d: f64,
    pub snr_db: f64,
    pub trials: u64,
    pub errors: u64,
    pub ser: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl EvalRow {
    pub fn new(system: &str, d: f64, snr_db: f64, trials: u64, errors: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(errors, trials);
        Self {
            system: system.to_string(),
            d,
            snr_db,
            trials,
            errors,
            ser: if trials == 0 { 0.0 } else { errors as f64 / trials as f64 },
            ci_low,
            ci_high,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub system: String,
    pub d: f64,
    pub average_weight: f64,
    pub average_power: f64,
    pub min_distance: usize,
    pub duplicates: usize,
}

impl AuditRow {
    pub fn new(system: &str, d: f64, cb: &Codebook, led: &LedModel) -> Self {
        let audit = cb.audit();
        Self {
            system: system.to_string(),
            d,
            average_weight: audit.average_weight,
            average_power: cb.average_power(led),
            min_distance: audit.min_hamming_distance,
            duplicates: audit.duplicate_count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub trials_per_point: usize,
    pub csi: String,
    pub channel: String,
    pub rows: Vec<EvalRow>,
    pub audits: Vec<AuditRow>,
}

impl EvalReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Serde(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Vec<EvalRow>> {
        csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<std::result::Result<Vec<EvalRow>, _>>()
            .map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    /// SER against SNR, one block per system and one column per target.
    pub fn summary(&self) -> String {
        let mut by_system: BTreeMap<&str, Vec<&EvalRow>> = BTreeMap::new();
        for row in &self.rows {
            by_system.entry(row.system.as_str()).or_default().push(row);
        }
        let mut out = String::new();
        let _ = writeln!(
            out,
            "symbol error rate ({} trials per point, channel {}, csi {})",
            self.trials_per_point, self.channel, self.csi
        );
        for (system, rows) in by_system {
            let mut ds: Vec<f64> = rows.iter().map(|r| r.d).collect();
            ds.sort_by(f64::total_cmp);
            ds.dedup();
            let mut snrs: Vec<f64> = rows.iter().map(|r| r.snr_db).collect();
            snrs.sort_by(f64::total_cmp);
            snrs.dedup();
            let _ = writeln!(out, "\n[{system}]");
            let _ = write!(out, "{:>8}", "SNR dB");
            for d in &ds {
                let _ = write!(out, " {:>11}", format!("d={d}"));
            }
            out.push('\n');
            for snr in &snrs {
                let _ = write!(out, "{snr:>8.2}");
                for d in &ds {
                    match rows.iter().find(|r| r.d == *d && r.snr_db == *snr) {
                        Some(r) => {
                            let _ = write!(out, " {:>11.3e}", r.ser);
                        }
                        None => {
                            let _ = write!(out, " {:>11}", "-");
                        }
                    }
                }
                out.push('\n');
            }
        }
        if !self.audits.is_empty() {
            let _ = writeln!(out, "\ncodebooks");
            for a in &self.audits {
                let _ = writeln!(
                    out,
                    "  {} d={}: average weight {:.4}, average power {:.4}, min distance {}, duplicates {}",
                    a.system, a.d, a.average_weight, a.average_power, a.min_distance, a.duplicates
                );
            }
        }
        out
    }
}
