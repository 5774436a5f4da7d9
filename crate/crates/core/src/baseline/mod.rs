//! Classical comparison systems: searched (semi-)constant-weight codebooks
//! and maximum-likelihood decoding with perfect, perturbed or no CSI.

mod search;

pub use search::{
    search_codebook, search_strategies, strategy, NonlinearSearch, RelaxedSearch, RestartSummary, SearchConfig,
    SearchResult, SearchStrategy, SearchTraceRow, StrictSearch,
};

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::optics::{propagate, LedModel};

/// Receiver knowledge of the channel matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CsiModel {
    #[default]
    Perfect,
    /// True matrix plus i.i.d. Gaussian error of this variance on its
    /// nonzero entries.
    Perturbed(f64),
    /// Only the channel-averaged matrix is known.
    None,
}

impl CsiModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            CsiModel::Perturbed(v) if !(*v >= 0.0 && v.is_finite()) => {
                Err(Error::domain(format!("CSI error variance must be >= 0, got {v}")))
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for CsiModel {
    type Err = Error;

    /// `perfect`, `none` or `perturbed:<variance>`.
    fn from_str(s: &str) -> Result<Self> {
        let model = match s {
            "perfect" => CsiModel::Perfect,
            "none" => CsiModel::None,
            other => match other.strip_prefix("perturbed:") {
                Some(v) => CsiModel::Perturbed(
                    v.parse()
                        .map_err(|_| Error::config(format!("bad CSI error variance `{v}`")))?,
                ),
                None => {
                    return Err(Error::config(format!(
                        "unknown CSI mode `{other}` (expected perfect, none or perturbed:<var>)"
                    )))
                }
            },
        };
        model.validate()?;
        Ok(model)
    }
}

impl TryFrom<String> for CsiModel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CsiModel> for String {
    fn from(c: CsiModel) -> String {
        c.to_string()
    }
}

impl fmt::Display for CsiModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CsiModel::Perfect => write!(f, "perfect"),
            CsiModel::None => write!(f, "none"),
            CsiModel::Perturbed(v) => write!(f, "perturbed:{v}"),
        }
    }
}

/// `H + E` where `E` is Gaussian with variance `error_variance` on the
/// nonzero entries of `H` and zero elsewhere.
pub fn perturb_csi(h: &Matrix, error_variance: f64, rng: &mut dyn RngCore) -> Result<Matrix> {
    CsiModel::Perturbed(error_variance).validate()?;
    if error_variance == 0.0 {
        return Ok(h.clone());
    }
    let normal = Normal::new(0.0, error_variance.sqrt()).map_err(|e| Error::domain(e.to_string()))?;
    let mut out = h.clone();
    for v in out.iter_mut() {
        if *v != 0.0 {
            *v += normal.sample(rng);
        }
    }
    Ok(out)
}

/// Nearest-neighbour decoder over the noiseless images `H g(s_b)`.
#[derive(Clone, Debug)]
pub struct MlDecoder {
    images: Vec<Vec<f64>>,
}

impl MlDecoder {
    pub fn new(codebook: &Codebook, h: &Matrix, led: &LedModel) -> Result<Self> {
        if h.nrows() != codebook.n || h.ncols() != codebook.n {
            return Err(Error::Dimension {
                context: "ML decoder channel matrix",
                expected: codebook.n,
                actual: h.nrows(),
            });
        }
        let images = codebook.codewords.iter().map(|c| propagate(&c.to_f64(), h, led)).collect();
        Ok(Self { images })
    }

    pub fn images(&self) -> &[Vec<f64>] {
        &self.images
    }

    /// `argmin_b ||r - H g(s_b)||^2`, lowest index on ties.
    pub fn decode(&self, r: &[f64]) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (b, image) in self.images.iter().enumerate() {
            let dist: f64 = image.iter().zip(r).map(|(a, x)| (x - a) * (x - a)).sum();
            if dist < best_dist {
                best = b;
                best_dist = dist;
            }
        }
        best
    }
}

pub fn ml_decode(r: &[f64], codebook: &Codebook, h: &Matrix, led: &LedModel) -> Result<usize> {
    Ok(MlDecoder::new(codebook, h, led)?.decode(r))
}
