//! Binary codebooks: extraction from a trained encoder, Hamming statistics,
//! complement flipping, the plain-text file format and reference fixtures.

mod fixtures;

pub use fixtures::{fixture_ids, load_fixture};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binarizer::{deterministic_binarize, BinarizerSpec};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::nn::Mode;
use crate::optics::LedModel;

/// One OOK word; every entry is 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Codeword(Vec<u8>);

impl Codeword {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::domain(format!("codeword symbol {b} is not binary")));
        }
        Ok(Self(bits))
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weight(&self) -> usize {
        self.0.iter().map(|&b| b as usize).sum()
    }

    pub fn distance(&self, other: &Codeword) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(b)).collect()
    }

    pub fn complement(&self) -> Codeword {
        Codeword(self.0.iter().map(|&b| 1 - b).collect())
    }
}

impl fmt::Display for Codeword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Learned,
    Searched,
    Fixture,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Learned => "learned",
            Provenance::Searched => "searched",
            Provenance::Fixture => "fixture",
        }
    }
}

/// M codewords of length N intended for dimming target `dimming`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub n: usize,
    pub dimming: f64,
    pub codewords: Vec<Codeword>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookAudit {
    pub average_weight: f64,
    pub min_hamming_distance: usize,
    /// Codewords equal to an earlier codeword.
    pub duplicate_count: usize,
    pub weights: Vec<usize>,
    /// Pairwise distance -> number of unordered pairs.
    pub distance_spectrum: BTreeMap<usize, usize>,
}

impl Codebook {
    pub fn new(n: usize, dimming: f64, words: Vec<Vec<u8>>, provenance: Provenance) -> Result<Self> {
        if words.len() < 2 {
            return Err(Error::domain(format!("a codebook needs at least two codewords, got {}", words.len())));
        }
        let codewords = words
            .into_iter()
            .map(|w| {
                if w.len() != n {
                    Err(Error::Dimension {
                        context: "codeword length",
                        expected: n,
                        actual: w.len(),
                    })
                } else {
                    Codeword::new(w)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            dimming,
            codewords,
            provenance,
        })
    }

    pub fn m(&self) -> usize {
        self.codewords.len()
    }

    pub fn average_weight(&self) -> f64 {
        let total: usize = self.codewords.iter().map(Codeword::weight).sum();
        total as f64 / self.m() as f64
    }

    /// `(1/M) sum_b sum_i g(s_b)_i`; equals the average weight for a linear LED.
    pub fn average_power(&self, led: &LedModel) -> f64 {
        if led.is_linear() {
            return self.average_weight();
        }
        let total: f64 = self.codewords.iter().map(|c| led.total_power(&c.to_f64())).sum();
        total / self.m() as f64
    }

    pub fn audit(&self) -> CodebookAudit {
        let mut spectrum = BTreeMap::new();
        let mut duplicate = vec![false; self.m()];
        for i in 0..self.m() {
            for j in (i + 1)..self.m() {
                let d = self.codewords[i].distance(&self.codewords[j]);
                *spectrum.entry(d).or_insert(0) += 1;
                if d == 0 {
                    duplicate[j] = true;
                }
            }
        }
        CodebookAudit {
            average_weight: self.average_weight(),
            min_hamming_distance: spectrum.keys().next().copied().unwrap_or(self.n),
            duplicate_count: duplicate.iter().filter(|&&d| d).count(),
            weights: self.codewords.iter().map(Codeword::weight).collect(),
            distance_spectrum: spectrum,
        }
    }

    /// Inverts every bit; the result serves dimming target `N - d`.
    pub fn flip_complement(&self) -> Codebook {
        Codebook {
            n: self.n,
            dimming: self.n as f64 - self.dimming,
            codewords: self.codewords.iter().map(Codeword::complement).collect(),
            provenance: self.provenance,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# ookdim codebook\n");
        out.push_str(&format!("n {}\n", self.n));
        out.push_str(&format!("m {}\n", self.m()));
        out.push_str(&format!("d {}\n", self.dimming));
        out.push_str(&format!("provenance {}\n", self.provenance.as_str()));
        for c in &self.codewords {
            out.push_str(&c.to_string());
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses the text format: `#` comments, `n`, `m`, `d` and optional
    /// `provenance` header lines, then one 0/1 string per codeword.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let (mut n, mut m, mut d, mut provenance) = (None, None, None, Provenance::Searched);
        let mut words: Vec<Vec<u8>> = Vec::new();
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            last_line = line_no;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.bytes().all(|c| c == b'0' || c == b'1') {
                let n = n.ok_or_else(|| err(line_no, "codeword before the `n` header".into()))?;
                if line.len() != n {
                    return Err(err(line_no, format!("codeword has length {}, expected {n}", line.len())));
                }
                words.push(line.bytes().map(|c| c - b'0').collect());
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            if !matches!(key, "n" | "m" | "d" | "provenance") {
                return Err(err(line_no, format!("unrecognised line `{line}`")));
            }
            let value = parts.next().ok_or_else(|| err(line_no, format!("`{key}` has no value")))?;
            if parts.next().is_some() {
                return Err(err(line_no, format!("unexpected trailing text after `{key} {value}`")));
            }
            match key {
                "n" => n = Some(value.parse::<usize>().map_err(|e| err(line_no, format!("bad n: {e}")))?),
                "m" => m = Some(value.parse::<usize>().map_err(|e| err(line_no, format!("bad m: {e}")))?),
                "d" => {
                    let v = value.parse::<f64>().map_err(|e| err(line_no, format!("bad d: {e}")))?;
                    if !v.is_finite() {
                        return Err(err(line_no, "d must be finite".into()));
                    }
                    d = Some(v);
                }
                "provenance" => {
                    provenance = match value {
                        "learned" => Provenance::Learned,
                        "searched" => Provenance::Searched,
                        "fixture" => Provenance::Fixture,
                        other => return Err(err(line_no, format!("unknown provenance `{other}`"))),
                    }
                }
                _ => unreachable!("key checked above"),
            }
        }
        let n = n.ok_or_else(|| err(last_line, "missing `n` header".into()))?;
        let m = m.ok_or_else(|| err(last_line, "missing `m` header".into()))?;
        let d = d.ok_or_else(|| err(last_line, "missing `d` header".into()))?;
        if words.len() != m {
            return Err(err(last_line, format!("header says m = {m} but {} codewords follow", words.len())));
        }
        Codebook::new(n, d, words, provenance).map_err(|e| err(last_line, e.to_string()))
    }
}

/// Deterministic codebook the encoder emits for target `target_index`.
pub fn extract_codebook(params: &ModelParams, binarizer: &BinarizerSpec, target_index: usize) -> Result<Codebook> {
    let d = binarizer.targets[target_index];
    let rows: Vec<(usize, f64)> = (0..params.m).map(|b| (b, d)).collect();
    let (u, _) = params.encode_batch(&rows, Mode::Eval)?;
    let offset = binarizer.offset(target_index);
    let words = u
        .rows()
        .into_iter()
        .map(|row| deterministic_binarize(row.as_slice().expect("contiguous row"), offset))
        .collect();
    Codebook::new(params.n, d, words, Provenance::Learned)
}
