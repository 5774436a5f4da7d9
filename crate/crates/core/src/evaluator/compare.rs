use serde::{Deserialize, Serialize};

use super::{EvalReport, EvalRow};
use crate::error::{Error, Result};

pub const DEFAULT_TARGET_SER: f64 = 1e-3;

/// Comparison at one shared `(d, SNR)` grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointGap {
    pub d: f64,
    pub snr_db: f64,
    pub ser_a: f64,
    pub ser_b: f64,
    /// `ser_a / ser_b`; absent when `ser_b` is zero.
    pub ratio: Option<f64>,
    /// The 95% intervals overlap.
    pub overlap: bool,
}

/// SNR each system needs to reach the target SER at one dimming target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbGap {
    pub d: f64,
    pub snr_a: Option<f64>,
    pub snr_b: Option<f64>,
    /// `snr_b - snr_a`: positive when system A needs less SNR.
    pub gain_db: Option<f64>,
    /// The intervals overlap at a point bracketing either crossing.
    pub unreliable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub system_a: String,
    pub system_b: String,
    pub target_ser: f64,
    pub points: Vec<PointGap>,
    pub gaps: Vec<DbGap>,
}

fn overlap(a: &EvalRow, b: &EvalRow) -> bool {
    a.ci_low <= b.ci_high && b.ci_low <= a.ci_high
}

/// SNR at which `log10(SER)` crosses `log10(target)`, interpolating linearly
/// in dB between grid points; also returns the bracketing index.
fn crossing(rows: &[&EvalRow], target: f64) -> Option<(f64, usize)> {
    for (i, w) in rows.windows(2).enumerate() {
        let (hi, lo) = (w[0], w[1]);
        if hi.ser >= target && lo.ser <= target && hi.ser > 0.0 {
            if lo.ser == target || hi.ser == lo.ser {
                return Some((if hi.ser == target { hi.snr_db } else { lo.snr_db }, i));
            }
            // a zero count is replaced by half an error
            let lo_ser = if lo.ser > 0.0 { lo.ser } else { 0.5 / lo.trials.max(1) as f64 };
            let (y0, y1) = (hi.ser.log10(), lo_ser.log10());
            let frac = (y0 - target.log10()) / (y0 - y1);
            return Some((hi.snr_db + frac * (lo.snr_db - hi.snr_db), i));
        }
    }
    None
}

fn rows_for<'a>(rows: &'a [EvalRow], system: &str, d: f64) -> Vec<&'a EvalRow> {
    let mut out: Vec<&EvalRow> = rows.iter().filter(|r| r.system == system && r.d == d).collect();
    out.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
    out
}

/// Compares system `a` against system `b`. Each report is expected to hold
/// one system; with several, the first listed is used.
pub fn compare(a: &EvalReport, b: &EvalReport, target_ser: f64) -> Result<Comparison> {
    if !(target_ser > 0.0 && target_ser < 1.0) {
        return Err(Error::domain(format!("target SER {target_ser} outside (0, 1)")));
    }
    let name = |r: &EvalReport| r.rows.first().map(|x| x.system.clone()).ok_or_else(|| Error::domain("empty report"));
    let (sa, sb) = (name(a)?, name(b)?);
    let mut ds: Vec<f64> = a.rows.iter().filter(|r| r.system == sa).map(|r| r.d).collect();
    ds.sort_by(f64::total_cmp);
    ds.dedup();
    let mut points = Vec::new();
    let mut gaps = Vec::new();
    for d in ds {
        let ra = rows_for(&a.rows, &sa, d);
        let rb = rows_for(&b.rows, &sb, d);
        if rb.is_empty() {
            continue;
        }
        for x in &ra {
            if let Some(y) = rb.iter().find(|y| y.snr_db == x.snr_db) {
                points.push(PointGap {
                    d,
                    snr_db: x.snr_db,
                    ser_a: x.ser,
                    ser_b: y.ser,
                    ratio: (y.ser > 0.0).then(|| x.ser / y.ser),
                    overlap: overlap(x, y),
                });
            }
        }
        let ca = crossing(&ra, target_ser);
        let cb = crossing(&rb, target_ser);
        let bracket_overlaps = |rows: &[&EvalRow], i: usize| {
            rows[i..=i + 1]
                .iter()
                .any(|r| points.iter().any(|p| p.d == d && p.snr_db == r.snr_db && p.overlap))
        };
        let unreliable = match (ca, cb) {
            (Some((_, i)), Some((_, j))) => bracket_overlaps(&ra, i) || bracket_overlaps(&rb, j),
            _ => true,
        };
        gaps.push(DbGap {
            d,
            snr_a: ca.map(|c| c.0),
            snr_b: cb.map(|c| c.0),
            gain_db: ca.zip(cb).map(|(x, y)| y.0 - x.0),
            unreliable,
        });
    }
    Ok(Comparison {
        system_a: sa,
        system_b: sb,
        target_ser,
        points,
        gaps,
    })
}

impl Comparison {
    pub fn summary(&self) -> String {
        let mut out = format!(
            "{} vs {} (gain = SNR_b - SNR_a at SER {:e})\n",
            self.system_a, self.system_b, self.target_ser
        );
        for g in &self.gaps {
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
            out.push_str(&format!(
                "  d={}: snr_a {} dB, snr_b {} dB, gain {} dB{}\n",
                g.d,
                fmt(g.snr_a),
                fmt(g.snr_b),
                fmt(g.gain_db),
                if g.unreliable { " (unreliable)" } else { "" }
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(system: &str, sers: &[(f64, f64)], trials: u64) -> EvalReport {
        EvalReport {
            seed: 0,
            trials_per_point: trials as usize,
            csi: "perfect".into(),
            channel: "identity".into(),
            rows: sers
                .iter()
                .map(|&(snr, ser)| EvalRow::new(system, 4.0, snr, trials, (ser * trials as f64).round() as u64))
                .collect(),
            audits: vec![],
        }
    }

    #[test]
    fn identical_reports_have_zero_gap() {
        let grid = [(0.0, 1e-1), (2.0, 1e-2), (4.0, 1e-4)];
        let a = report("a", &grid, 1_000_000);
        let b = report("b", &grid, 1_000_000);
        let c = compare(&a, &b, DEFAULT_TARGET_SER).unwrap();
        assert_eq!(c.gaps.len(), 1);
        assert_eq!(c.gaps[0].gain_db, Some(0.0));
        assert!(c.points.iter().all(|p| p.ratio == Some(1.0)));
    }

    #[test]
    fn constructed_ratio_and_shift() {
        let a = report("a", &[(0.0, 2e-2), (2.0, 2e-3), (4.0, 2e-4)], 1_000_000);
        let b = report("b", &[(0.0, 1e-2), (2.0, 1e-3), (4.0, 1e-4)], 1_000_000);
        let c = compare(&a, &b, DEFAULT_TARGET_SER).unwrap();
        for p in &c.points {
            assert!((p.ratio.unwrap() - 2.0).abs() < 1e-12);
            assert!(!p.overlap);
        }
        // a crosses 1e-3 at 2 + 2*log10(2) dB, b exactly at 2 dB
        let gain = c.gaps[0].gain_db.unwrap();
        assert!((gain + 2.0 * 2f64.log10()).abs() < 1e-12, "{gain}");
        assert!(!c.gaps[0].unreliable);
    }

    #[test]
    fn missing_crossing_is_unreliable() {
        let a = report("a", &[(0.0, 1e-1), (2.0, 5e-2)], 10_000);
        let c = compare(&a, &a, DEFAULT_TARGET_SER).unwrap();
        assert_eq!(c.gaps[0].gain_db, None);
        assert!(c.gaps[0].unreliable);
    }
}
