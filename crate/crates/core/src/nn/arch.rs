use serde::{Deserialize, Serialize};

use super::{Activation, LayerSpec};

/// Hidden-layer layouts for the encoder; the decoder mirrors them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchitecturePreset {
    /// `2M^2, M^2, M^2/2`, used for N = 8.
    ThreeLayer,
    /// `24M^2, 12M^2, 12M^2, 6M^2`, used for N = 12.
    FourLayer,
    /// `32M^2, 16M^2, 8M^2, 4M^2, M^2`, used for the random ISI channel.
    FiveLayer,
    /// Explicit encoder hidden widths.
    Custom(Vec<usize>),
}

impl ArchitecturePreset {
    pub fn encoder_hidden(&self, m: usize) -> Vec<usize> {
        let sq = m * m;
        let dims = match self {
            Self::ThreeLayer => vec![2 * sq, sq, sq / 2],
            Self::FourLayer => vec![24 * sq, 12 * sq, 12 * sq, 6 * sq],
            Self::FiveLayer => vec![32 * sq, 16 * sq, 8 * sq, 4 * sq, sq],
            Self::Custom(dims) => dims.clone(),
        };
        dims.into_iter().map(|d| d.max(1)).collect()
    }

    pub fn decoder_hidden(&self, m: usize) -> Vec<usize> {
        let mut dims = self.encoder_hidden(m);
        dims.reverse();
        dims
    }
}

/// Encoder: `[one-hot(b), d/N]` (length M+1) to the pre-binarization vector u (length N).
pub fn encoder_specs(preset: &ArchitecturePreset, m: usize, n: usize, batch_norm: bool) -> Vec<LayerSpec> {
    chain(m + 1, &preset.encoder_hidden(m), n, Activation::EncoderOutput, batch_norm)
}

/// Decoder: `[r, d/N]` or `[r, d/N, vec(H)]` to M class probabilities.
pub fn decoder_specs(preset: &ArchitecturePreset, m: usize, n: usize, csi_input: bool, batch_norm: bool) -> Vec<LayerSpec> {
    let input = if csi_input { n * n + n + 1 } else { n + 1 };
    chain(input, &preset.decoder_hidden(m), m, Activation::Softmax, batch_norm)
}

fn chain(input: usize, hidden: &[usize], output: usize, head: Activation, batch_norm: bool) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input;
    for &h in hidden {
        specs.push(LayerSpec::new(prev, h, Activation::Relu, batch_norm));
        prev = h;
    }
    specs.push(LayerSpec::new(prev, output, head, false));
    specs
}
