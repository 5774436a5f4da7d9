use std::fmt::Debug;
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::isi::{make_isi_channel, sample_geometry, DelayMode};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// A distribution over N x N channel matrices.
pub trait ChannelModel: Send + Sync + Debug {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    /// Whether [`ChannelModel::sample`] can return different matrices.
    fn is_random(&self) -> bool;
    fn sample(&self, rng: &mut dyn RngCore) -> Matrix;
}

#[derive(Clone, Debug)]
pub struct IdentityChannel {
    h: Matrix,
}

impl IdentityChannel {
    pub fn new(n: usize) -> Self {
        Self { h: Matrix::eye(n) }
    }
}

impl ChannelModel for IdentityChannel {
    fn name(&self) -> &'static str {
        "identity"
    }
    fn dim(&self) -> usize {
        self.h.nrows()
    }
    fn is_random(&self) -> bool {
        false
    }
    fn sample(&self, _rng: &mut dyn RngCore) -> Matrix {
        self.h.clone()
    }
}

#[derive(Clone, Debug)]
pub struct FixedChannel {
    h: Matrix,
}

impl FixedChannel {
    pub fn new(h: Matrix) -> Result<Self> {
        if h.nrows() != h.ncols() {
            return Err(Error::Dimension {
                context: "fixed channel matrix must be square",
                expected: h.nrows(),
                actual: h.ncols(),
            });
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("fixed channel matrix has non-finite entries"));
        }
        Ok(Self { h })
    }
}

impl ChannelModel for FixedChannel {
    fn name(&self) -> &'static str {
        "fixed"
    }
    fn dim(&self) -> usize {
        self.h.nrows()
    }
    fn is_random(&self) -> bool {
        false
    }
    fn sample(&self, _rng: &mut dyn RngCore) -> Matrix {
        self.h.clone()
    }
}

/// Two-path ISI channel with the photodiode dropped uniformly on the floor
/// for every realization.
#[derive(Clone, Debug)]
pub struct IsiChannel {
    n: usize,
    mode: DelayMode,
}

impl IsiChannel {
    pub fn new(n: usize, mode: DelayMode) -> Self {
        Self { n, mode }
    }
}

impl ChannelModel for IsiChannel {
    fn name(&self) -> &'static str {
        "isi-random"
    }
    fn dim(&self) -> usize {
        self.n
    }
    fn is_random(&self) -> bool {
        true
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Matrix {
        let p = sample_geometry(rng);
        make_isi_channel(p, self.n, self.mode).expect("sampled position is in range").0
    }
}

/// Serializable channel description used in run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    /// Registered channel model name: `identity`, `fixed` or `isi-random`.
    #[serde(default = "default_model")]
    pub model: String,
    /// Whitespace-separated matrix file for the `fixed` model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_file: Option<PathBuf>,
    /// Inline rows for the `fixed` model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub isi_delay_mode: DelayMode,
}

fn default_model() -> String {
    "identity".into()
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            model: default_model(),
            matrix_file: None,
            matrix: None,
            isi_delay_mode: DelayMode::Literal,
        }
    }
}

impl ChannelSpec {
    /// The fixed matrix, from the inline rows or the matrix file.
    pub fn fixed_matrix(&self) -> Result<Matrix> {
        if let Some(rows) = &self.matrix {
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(Error::config("inline channel matrix must be square"));
            }
            return Ok(Matrix::from_shape_fn((n, n), |(i, j)| rows[i][j]));
        }
        match &self.matrix_file {
            Some(path) => load_matrix(path),
            None => Err(Error::config("fixed channel needs `matrix` or `matrix_file`")),
        }
    }
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, path)
}

/// Whitespace-separated rows; blank lines and `#` comments are skipped.
pub fn parse_matrix(text: &str, path: &Path) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!("`{tok}` is not a finite number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "empty matrix".into(),
        });
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(Matrix::from_shape_fn((r, c), |(i, j)| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_whitespace_matrix() {
        let m = parse_matrix("1 0\n# note\n\n0.5   2\n", Path::new("h.txt")).unwrap();
        assert_eq!(m, ndarray::array![[1.0, 0.0], [0.5, 2.0]]);
    }

    #[test]
    fn ragged_matrix_reports_line() {
        let err = parse_matrix("1 0\n1 2 3\n", Path::new("h.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_matrix("1 x\n", Path::new("h.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn fixed_channel_rejects_non_square() {
        assert!(FixedChannel::new(Matrix::zeros((2, 3))).is_err());
    }
}
