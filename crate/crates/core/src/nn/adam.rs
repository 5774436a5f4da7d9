use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bias-corrected Adam moments for a list of parameter tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One Adam update. With `ascent` set the gradient is negated, so the
    /// parameters move uphill.
    ///
    /// Gradients are checked for finiteness before anything is modified.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], learning_rate: f64, ascent: bool) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::Dimension {
                context: "adam tensor count",
                expected: self.first_moment.len(),
                actual: params.len().min(grads.len()),
            });
        }
        for (t, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first_moment[t].len() || g.len() != p.len() {
                return Err(Error::Dimension {
                    context: "adam tensor size",
                    expected: self.first_moment[t].len(),
                    actual: g.len(),
                });
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: format!("gradient tensor {t} element {i} ({})", g[i]),
                    iteration: self.step_count,
                });
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let correction1 = 1.0 - self.beta1.powi(t);
        let correction2 = 1.0 - self.beta2.powi(t);
        let sign = if ascent { -1.0 } else { 1.0 };
        for (tensor, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[tensor];
            let v = &mut self.second_moment[tensor];
            for i in 0..p.len() {
                let gi = sign * g[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut state = AdamState::new(&[3]);
        let mut p = vec![0.5, -1.0, 2.0];
        for _ in 0..5 {
            state.step(&mut [&mut p[..]], &[&[0.0, 0.0, 0.0]], 1e-2, false).unwrap();
        }
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2 on the first step, so the move is lr * g / (|g| + eps)
        let mut state = AdamState::new(&[3]);
        let mut p = vec![0.0, 0.0, 0.0];
        let g = [0.3, -2.0, 1e-3];
        state.step(&mut [&mut p[..]], &[&g], 0.01, false).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            let expected = -0.01 * gi / (gi.abs() + 1e-8);
            assert!((pi - expected).abs() < 1e-15, "{pi} vs {expected}");
        }
    }

    #[test]
    fn ascent_increases_along_positive_residual() {
        let mut state = AdamState::new(&[1]);
        let mut lambda = vec![0.0];
        state.step(&mut [&mut lambda[..]], &[&[0.1]], 1e-3, true).unwrap();
        assert!(lambda[0] > 0.0);
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut state = AdamState::new(&[2]);
        let mut p = vec![1.0, 1.0];
        let err = state.step(&mut [&mut p[..]], &[&[0.1, f64::NAN]], 1e-3, false);
        assert!(matches!(err, Err(Error::NonFinite { .. })));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(state.step_count, 0);
    }
}
