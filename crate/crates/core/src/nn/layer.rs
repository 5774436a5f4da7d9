use ndarray::{Array1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{relu, softmax_rows, BatchNorm, BnCache, Matrix, Mode, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Linear,
    Softmax,
    /// Linear output that feeds the binarizer.
    EncoderOutput,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub batch_norm: bool,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation, batch_norm: bool) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
            batch_norm,
        }
    }
}

/// Affine layer, optional batch normalization, then the activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub spec: LayerSpec,
    /// `input_dim x output_dim`, applied as `x W + b` to row batches.
    pub weights: Matrix,
    pub bias: Vector,
    pub batch_norm: Option<BatchNorm>,
}

#[derive(Clone, Debug)]
pub struct LayerCache {
    pub input: Matrix,
    /// Value entering the activation (after batch norm when present).
    pub pre_activation: Matrix,
    pub output: Matrix,
    pub bn: Option<BnCache>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Vector,
    pub gamma: Option<Vector>,
    pub beta: Option<Vector>,
}

impl Dense {
    /// He-uniform weights for ReLU layers, Glorot-uniform for output layers,
    /// zero biases.
    pub fn init<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Self {
        let fan_in = spec.input_dim as f64;
        let fan_out = spec.output_dim as f64;
        let limit = match spec.activation {
            Activation::Relu => (6.0 / fan_in).sqrt(),
            _ => (6.0 / (fan_in + fan_out)).sqrt(),
        };
        let weights = Matrix::from_shape_simple_fn((spec.input_dim, spec.output_dim), || {
            rng.random_range(-limit..=limit)
        });
        Self {
            spec,
            weights,
            bias: Array1::zeros(spec.output_dim),
            batch_norm: spec.batch_norm.then(|| BatchNorm::new(spec.output_dim)),
        }
    }

    pub fn forward(&self, input: &Matrix, mode: Mode) -> (Matrix, LayerCache) {
        let affine = input.dot(&self.weights) + &self.bias;
        let (pre_activation, bn) = match &self.batch_norm {
            Some(bn) => {
                let (out, cache) = bn.forward(&affine, mode);
                (out, Some(cache))
            }
            None => (affine, None),
        };
        let output = match self.spec.activation {
            Activation::Relu => pre_activation.mapv(relu),
            Activation::Linear | Activation::EncoderOutput => pre_activation.clone(),
            Activation::Softmax => softmax_rows(&pre_activation),
        };
        (
            output.clone(),
            LayerCache {
                input: input.clone(),
                pre_activation,
                output,
                bn,
            },
        )
    }

    /// Maps a gradient w.r.t. the layer output to one w.r.t. its pre-activation.
    pub fn activation_backward(&self, cache: &LayerCache, d_out: &Matrix) -> Matrix {
        match self.spec.activation {
            Activation::Relu => {
                let mut d = d_out.clone();
                ndarray::Zip::from(&mut d)
                    .and(&cache.pre_activation)
                    .for_each(|g, &z| {
                        if z <= 0.0 {
                            *g = 0.0;
                        }
                    });
                d
            }
            Activation::Linear | Activation::EncoderOutput => d_out.clone(),
            Activation::Softmax => {
                let p = &cache.output;
                let dot = (d_out * p).sum_axis(Axis(1)).insert_axis(Axis(1));
                p * &(d_out - &dot)
            }
        }
    }

    /// Backward pass from a gradient w.r.t. the pre-activation. Returns the
    /// gradient w.r.t. the layer input and the parameter gradients.
    pub fn backward_pre_activation(&self, cache: &LayerCache, d_pre: &Matrix) -> (Matrix, LayerGrads) {
        let (d_affine, gamma, beta) = match (&self.batch_norm, &cache.bn) {
            (Some(bn), Some(bn_cache)) => {
                let (d, g, b) = bn.backward(bn_cache, d_pre);
                (d, Some(g), Some(b))
            }
            _ => (d_pre.clone(), None, None),
        };
        let d_weights = cache.input.t().dot(&d_affine);
        let d_bias = d_affine.sum_axis(Axis(0));
        let d_input = d_affine.dot(&self.weights.t());
        (
            d_input,
            LayerGrads {
                weights: d_weights,
                bias: d_bias,
                gamma,
                beta,
            },
        )
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.weights.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ];
        if let Some(bn) = &mut self.batch_norm {
            out.push(bn.gamma.as_slice_mut().expect("standard layout"));
            out.push(bn.beta.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.weights.len(), self.bias.len()];
        if let Some(bn) = &self.batch_norm {
            sizes.push(bn.gamma.len());
            sizes.push(bn.beta.len());
        }
        sizes
    }

    pub fn is_finite(&self) -> bool {
        let bn_ok = self.batch_norm.as_ref().is_none_or(|bn| {
            bn.gamma.iter().chain(&bn.beta).chain(&bn.running_mean).chain(&bn.running_var).all(|v| v.is_finite())
        });
        bn_ok && self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

impl LayerGrads {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            self.weights.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ];
        if let (Some(g), Some(b)) = (&self.gamma, &self.beta) {
            out.push(g.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }
}
