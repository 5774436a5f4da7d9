use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, Dense, LayerCache, LayerGrads, LayerSpec, Matrix, Mode};
use crate::error::{Error, Result};

/// A chain of dense layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Dense>,
    /// Bumped every time the trainable parameters change; tapes recorded at
    /// an older version are rejected by [`Network::backward`].
    #[serde(default)]
    pub version: u64,
}

/// Activations recorded by a forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    pub version: u64,
    pub mode: Mode,
    pub layers: Vec<LayerCache>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Network {
    pub fn new<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for (i, spec) in specs.iter().enumerate() {
            if spec.input_dim == 0 || spec.output_dim == 0 {
                return Err(Error::config(format!("layer {i} has a zero dimension")));
            }
            if spec.activation == Activation::Softmax && i + 1 != specs.len() {
                return Err(Error::config("softmax is only allowed on the final layer"));
            }
            if i > 0 && specs[i - 1].output_dim != spec.input_dim {
                return Err(Error::Dimension {
                    context: "layer chain",
                    expected: specs[i - 1].output_dim,
                    actual: spec.input_dim,
                });
            }
        }
        Ok(Self {
            layers: specs.iter().map(|s| Dense::init(*s, rng)).collect(),
            version: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").spec.output_dim
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn forward(&self, input: &Matrix, mode: Mode) -> Result<(Matrix, Tape)> {
        if input.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                context: "network input",
                expected: self.input_dim(),
                actual: input.ncols(),
            });
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (out, cache) = layer.forward(&x, mode);
            caches.push(cache);
            x = out;
        }
        Ok((
            x,
            Tape {
                version: self.version,
                mode,
                layers: caches,
            },
        ))
    }

    /// Eval-mode forward pass without a tape.
    pub fn infer(&self, input: &Matrix) -> Result<Matrix> {
        Ok(self.forward(input, Mode::Eval)?.0)
    }

    /// Folds the batch statistics of a train-mode tape into the batch-norm
    /// running averages.
    pub fn commit(&mut self, tape: &Tape) {
        if tape.mode != Mode::Train {
            return;
        }
        for (layer, cache) in self.layers.iter_mut().zip(&tape.layers) {
            if let (Some(bn), Some(bn_cache)) = (&mut layer.batch_norm, &cache.bn) {
                bn.commit(bn_cache, cache.input.nrows());
            }
        }
    }

    /// Gradients from an upstream gradient w.r.t. the network output.
    pub fn backward(&self, tape: &Tape, d_output: &Matrix) -> Result<(Gradients, Matrix)> {
        self.check_tape(tape)?;
        let last = self.layers.len() - 1;
        let d_pre = self.layers[last].activation_backward(&tape.layers[last], d_output);
        self.backward_from(tape, d_pre)
    }

    /// Gradients from an upstream gradient w.r.t. the final layer's
    /// pre-activation (the logits, for a softmax head).
    pub fn backward_logits(&self, tape: &Tape, d_logits: &Matrix) -> Result<(Gradients, Matrix)> {
        self.check_tape(tape)?;
        self.backward_from(tape, d_logits.clone())
    }

    fn check_tape(&self, tape: &Tape) -> Result<()> {
        if tape.version != self.version || tape.layers.len() != self.layers.len() {
            return Err(Error::StaleTape {
                tape: tape.version,
                network: self.version,
            });
        }
        Ok(())
    }

    fn backward_from(&self, tape: &Tape, mut d_pre: Matrix) -> Result<(Gradients, Matrix)> {
        let last = self.layers.len() - 1;
        if d_pre.dim() != tape.layers[last].pre_activation.dim() {
            return Err(Error::Dimension {
                context: "upstream gradient",
                expected: tape.layers[last].pre_activation.len(),
                actual: d_pre.len(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d_input = Matrix::zeros((0, 0));
        for (idx, (layer, cache)) in self.layers.iter().zip(&tape.layers).enumerate().rev() {
            let (d_in, g) = layer.backward_pre_activation(cache, &d_pre);
            grads.push(g);
            if idx > 0 {
                d_pre = self.layers[idx - 1].activation_backward(&tape.layers[idx - 1], &d_in);
            } else {
                d_input = d_in;
            }
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, d_input))
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.param_slices_mut()).collect()
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| l.param_sizes()).collect()
    }

    /// Marks the parameters as modified.
    pub fn touch(&mut self) {
        self.version += 1;
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }
}

impl Gradients {
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net(seed: u64, bn: bool, head: Activation) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = [
            LayerSpec::new(4, 6, Activation::Relu, bn),
            LayerSpec::new(6, 5, Activation::Relu, bn),
            LayerSpec::new(5, 3, head, false),
        ];
        let mut net = Network::new(&specs, &mut rng).unwrap();
        // move batch-norm away from its identity initialisation
        for layer in &mut net.layers {
            if let Some(bn) = &mut layer.batch_norm {
                bn.gamma.mapv_inplace(|_| rng.random_range(0.5..1.5));
                bn.beta.mapv_inplace(|_| rng.random_range(-0.3..0.3));
            }
            layer.bias.mapv_inplace(|_| rng.random_range(-0.1..0.1));
        }
        net
    }

    fn weighted_output(net: &Network, x: &Matrix, w: &Matrix) -> f64 {
        let (out, _) = net.forward(x, Mode::Train).unwrap();
        (&out * w).sum()
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = small_net(1, true, Activation::Linear);
        let x = Matrix::from_elem((5, 4), 0.3);
        let (_, tape) = net.forward(&x, Mode::Train).unwrap();
        let (g, dx) = net.backward(&tape, &Matrix::zeros((5, 3))).unwrap();
        assert!(g.is_zero());
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut net = small_net(2, false, Activation::Linear);
        let x = Matrix::from_elem((2, 4), 1.0);
        let (_, tape) = net.forward(&x, Mode::Train).unwrap();
        net.touch();
        assert!(matches!(
            net.backward(&tape, &Matrix::ones((2, 3))),
            Err(Error::StaleTape { .. })
        ));
    }

    #[test]
    fn input_dimension_is_checked() {
        let net = small_net(3, false, Activation::Linear);
        assert!(matches!(
            net.forward(&Matrix::zeros((1, 5)), Mode::Eval),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn softmax_must_be_last() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let specs = [
            LayerSpec::new(2, 2, Activation::Softmax, false),
            LayerSpec::new(2, 2, Activation::Linear, false),
        ];
        assert!(Network::new(&specs, &mut rng).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..10u64 {
            for (bn, head) in [(false, Activation::Linear), (true, Activation::Linear), (true, Activation::Softmax)] {
                let net = small_net(seed, bn, head);
                let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
                let x = Matrix::from_shape_fn((7, 4), |_| rng.random_range(-1.0..1.0));
                let w = Matrix::from_shape_fn((7, 3), |_| rng.random_range(-1.0..1.0));
                let (_, tape) = net.forward(&x, Mode::Train).unwrap();
                let (grads, _) = net.backward(&tape, &w).unwrap();
                let analytic: Vec<f64> = grads.tensors().into_iter().flatten().copied().collect();
                let mut probe = net.clone();
                let sizes = probe.param_sizes();
                let mut flat = 0;
                let h = 1e-5;
                for (t, &size) in sizes.iter().enumerate() {
                    for i in 0..size {
                        let orig = probe.param_slices_mut()[t][i];
                        probe.param_slices_mut()[t][i] = orig + h;
                        let up = weighted_output(&probe, &x, &w);
                        probe.param_slices_mut()[t][i] = orig - h;
                        let down = weighted_output(&probe, &x, &w);
                        probe.param_slices_mut()[t][i] = orig;
                        let fd = (up - down) / (2.0 * h);
                        let a = analytic[flat];
                        let scale = a.abs().max(fd.abs()).max(1e-6);
                        assert!((a - fd).abs() / scale <= 1e-4, "seed {seed} tensor {t}[{i}]: {a} vs {fd}");
                        flat += 1;
                    }
                }
            }
        }
    }
}
