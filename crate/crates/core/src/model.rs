//! Encoder/decoder parameter container.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{decoder_specs, encoder_specs, ArchitecturePreset, Matrix, Mode, Network, Tape};

/// All trainable state of the transceiver: the encoder mapping
/// `[one-hot(b), d/N]` to the pre-binarization vector, and the decoder mapping
/// `[r, d/N]` (optionally followed by `vec(H)`) to message probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub m: usize,
    pub n: usize,
    pub csi_input: bool,
    pub encoder: Network,
    pub decoder: Network,
}

impl ModelParams {
    pub fn new<R: Rng + ?Sized>(
        preset: &ArchitecturePreset,
        m: usize,
        n: usize,
        csi_input: bool,
        batch_norm: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if m < 2 || n < 1 {
            return Err(Error::config(format!("need M >= 2 and N >= 1, got M={m}, N={n}")));
        }
        let encoder = Network::new(&encoder_specs(preset, m, n, batch_norm), rng)?;
        let decoder = Network::new(&decoder_specs(preset, m, n, csi_input, batch_norm), rng)?;
        let params = Self {
            m,
            n,
            csi_input,
            encoder,
            decoder,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks the layer chain against `m`, `n` and the CSI flag.
    pub fn validate(&self) -> Result<()> {
        let check = |context, expected, actual| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::Dimension {
                    context,
                    expected,
                    actual,
                })
            }
        };
        check("encoder input", self.m + 1, self.encoder.input_dim())?;
        check("encoder output", self.n, self.encoder.output_dim())?;
        check("decoder input", self.decoder_input_dim(), self.decoder.input_dim())?;
        check("decoder output", self.m, self.decoder.output_dim())?;
        for net in [&self.encoder, &self.decoder] {
            for pair in net.layers.windows(2) {
                check("layer chain", pair[0].spec.output_dim, pair[1].spec.input_dim)?;
            }
        }
        if !(self.encoder.is_finite() && self.decoder.is_finite()) {
            return Err(Error::config("model parameters contain non-finite values"));
        }
        Ok(())
    }

    pub fn decoder_input_dim(&self) -> usize {
        if self.csi_input {
            self.n * self.n + self.n + 1
        } else {
            self.n + 1
        }
    }

    /// Encoder inputs, one row per `(message, dimming)` pair.
    pub fn encoder_input(&self, rows: &[(usize, f64)]) -> Result<Matrix> {
        let mut x = Matrix::zeros((rows.len(), self.m + 1));
        for (r, &(message, dimming)) in rows.iter().enumerate() {
            if message >= self.m {
                return Err(Error::domain(format!("message index {message} >= M = {}", self.m)));
            }
            x[[r, message]] = 1.0;
            x[[r, self.m]] = dimming / self.n as f64;
        }
        Ok(x)
    }

    /// Decoder inputs from received vectors; `channels` must be given iff the
    /// decoder was built with CSI input.
    pub fn decoder_input(&self, received: &Matrix, dimming: &[f64], channels: Option<&[&Matrix]>) -> Result<Matrix> {
        let rows = received.nrows();
        if received.ncols() != self.n {
            return Err(Error::Dimension {
                context: "received vector",
                expected: self.n,
                actual: received.ncols(),
            });
        }
        match (self.csi_input, channels) {
            (false, Some(_)) => {
                return Err(Error::config("CSI supplied to a decoder built without CSI input"));
            }
            (true, None) => return Err(Error::config("decoder expects CSI input")),
            _ => {}
        }
        let mut x = Matrix::zeros((rows, self.decoder_input_dim()));
        for r in 0..rows {
            for i in 0..self.n {
                x[[r, i]] = received[[r, i]];
            }
            x[[r, self.n]] = dimming[r] / self.n as f64;
            if let Some(chs) = channels {
                let h = chs[r];
                for (k, v) in h.iter().enumerate() {
                    x[[r, self.n + 1 + k]] = *v;
                }
            }
        }
        Ok(x)
    }

    /// Pre-binarization vector `u` for one message at dimming target `dimming`.
    pub fn forward_encoder(&self, message: usize, dimming: f64, mode: Mode) -> Result<Vec<f64>> {
        let x = self.encoder_input(&[(message, dimming)])?;
        Ok(self.encoder.forward(&x, mode)?.0.row(0).to_vec())
    }

    pub fn encode_batch(&self, rows: &[(usize, f64)], mode: Mode) -> Result<(Matrix, Tape)> {
        let x = self.encoder_input(rows)?;
        self.encoder.forward(&x, mode)
    }

    /// Message probabilities for one received vector.
    pub fn forward_decoder(&self, received: &[f64], dimming: f64, csi: Option<&Matrix>, mode: Mode) -> Result<Vec<f64>> {
        let r = Matrix::from_shape_vec((1, received.len()), received.to_vec()).map_err(|e| Error::config(e.to_string()))?;
        let chs = csi.map(|h| vec![h]);
        let x = self.decoder_input(&r, &[dimming], chs.as_deref())?;
        Ok(self.decoder.forward(&x, mode)?.0.row(0).to_vec())
    }

    pub fn touch(&mut self) {
        self.encoder.touch();
        self.decoder.touch();
    }
}

/// `argmax_b p_b`, lowest index on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense, LayerSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64, csi: bool) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModelParams::new(&ArchitecturePreset::ThreeLayer, 4, 8, csi, true, &mut rng).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut p = model(1, false);
        for layer in &mut p.encoder.layers {
            layer.weights.fill(0.0);
            layer.bias.fill(0.0);
            layer.batch_norm = None;
        }
        for b in 0..4 {
            let u = p.forward_encoder(b, 3.0, Mode::Eval).unwrap();
            assert_eq!(u, vec![0.0; 8]);
        }
    }

    #[test]
    fn identity_block_reproduces_one_hot() {
        let m = 2;
        let layer = Dense {
            spec: LayerSpec::new(m + 1, m, Activation::EncoderOutput, false),
            weights: ndarray::array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]],
            bias: ndarray::Array1::zeros(m),
            batch_norm: None,
        };
        let mut p = model(2, false);
        p.m = m;
        p.n = m;
        p.encoder = Network {
            layers: vec![layer],
            version: 0,
        };
        assert_eq!(p.forward_encoder(0, 1.3, Mode::Eval).unwrap(), vec![1.0, 0.0]);
        assert_eq!(p.forward_encoder(1, 0.2, Mode::Eval).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn csi_mismatch_is_a_config_error() {
        let p = model(3, false);
        let h = Matrix::eye(8);
        assert!(matches!(
            p.forward_decoder(&[0.0; 8], 4.0, Some(&h), Mode::Eval),
            Err(Error::Config(_))
        ));
        let q = model(3, true);
        assert!(q.forward_decoder(&[0.0; 8], 4.0, None, Mode::Eval).is_err());
        let probs = q.forward_decoder(&[0.0; 8], 4.0, Some(&h), Mode::Eval).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_message_is_rejected() {
        assert!(model(4, false).forward_encoder(4, 2.0, Mode::Eval).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.25; 4]), 0);
    }
}
