use serde::{Deserialize, Serialize};

/// Polynomial coefficients `a_1..a_4` of the Kingbright blue T-1 3/4 LED.
pub const KINGBRIGHT_COEFFICIENTS: [f64; 4] = [34.11, -29.99, 6.999, -0.1468];
pub const KINGBRIGHT_MEMORY: f64 = 0.1;

/// Electro-optic transfer of the LED.
///
/// The Hammerstein form is `g(z)_i = p(z_i) + memory * p(z_{i-1})` with
/// `p(x) = sum_k a_k x^k` and `z_0 = 0` at the start of a frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LedModel {
    Linear,
    Hammerstein { coefficients: Vec<f64>, memory: f64 },
}

/// Diagonal and first sub-diagonal of the transfer Jacobian;
/// `subdiagonal[i] = d g_i / d z_{i-1}` and `subdiagonal[0] = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LedJacobian {
    pub diagonal: Vec<f64>,
    pub subdiagonal: Vec<f64>,
}

impl Default for LedModel {
    fn default() -> Self {
        LedModel::Linear
    }
}

impl LedModel {
    pub fn kingbright() -> Self {
        LedModel::Hammerstein {
            coefficients: KINGBRIGHT_COEFFICIENTS.to_vec(),
            memory: KINGBRIGHT_MEMORY,
        }
    }

    pub fn is_linear(&self) -> bool {
        match self {
            LedModel::Linear => true,
            LedModel::Hammerstein { coefficients, memory } => coefficients.as_slice() == [1.0] && *memory == 0.0,
        }
    }

    fn poly(coefficients: &[f64], x: f64) -> f64 {
        // Horner on sum_{k>=1} a_k x^k
        coefficients.iter().rev().fold(0.0, |acc, &a| (acc + a) * x)
    }

    fn poly_derivative(coefficients: &[f64], x: f64) -> f64 {
        coefficients
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, &a)| acc * x + (k as f64 + 1.0) * a)
    }

    pub fn forward(&self, z: &[f64]) -> Vec<f64> {
        match self {
            LedModel::Linear => z.to_vec(),
            LedModel::Hammerstein { coefficients, memory } => {
                let p: Vec<f64> = z.iter().map(|&x| Self::poly(coefficients, x)).collect();
                (0..z.len())
                    .map(|i| p[i] + if i > 0 { memory * p[i - 1] } else { 0.0 })
                    .collect()
            }
        }
    }

    pub fn jacobian(&self, z: &[f64]) -> LedJacobian {
        match self {
            LedModel::Linear => LedJacobian {
                diagonal: vec![1.0; z.len()],
                subdiagonal: vec![0.0; z.len()],
            },
            LedModel::Hammerstein { coefficients, memory } => {
                let dp: Vec<f64> = z.iter().map(|&x| Self::poly_derivative(coefficients, x)).collect();
                let sub = (0..z.len()).map(|i| if i > 0 { memory * dp[i - 1] } else { 0.0 }).collect();
                LedJacobian {
                    diagonal: dp,
                    subdiagonal: sub,
                }
            }
        }
    }

    /// `J^T upstream`, the gradient w.r.t. `z` of `<upstream, g(z)>`.
    pub fn vjp(&self, z: &[f64], upstream: &[f64]) -> Vec<f64> {
        if let LedModel::Linear = self {
            return upstream.to_vec();
        }
        let jac = self.jacobian(z);
        (0..z.len())
            .map(|i| {
                let next = if i + 1 < z.len() { jac.subdiagonal[i + 1] * upstream[i + 1] } else { 0.0 };
                jac.diagonal[i] * upstream[i] + next
            })
            .collect()
    }

    /// Steady-state optical power of one "on" slot preceded by another "on" slot.
    pub fn on_power(&self) -> f64 {
        match self {
            LedModel::Linear => 1.0,
            LedModel::Hammerstein { coefficients, memory } => Self::poly(coefficients, 1.0) * (1.0 + memory),
        }
    }

    /// Total optical power `sum_i g(z)_i` of a word.
    pub fn total_power(&self, z: &[f64]) -> f64 {
        self.forward(z).iter().sum()
    }
}

impl LedJacobian {
    pub fn dense(&self) -> crate::nn::Matrix {
        let n = self.diagonal.len();
        crate::nn::Matrix::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                self.diagonal[i]
            } else if i == j + 1 {
                self.subdiagonal[i]
            } else {
                0.0
            }
        })
    }
}
