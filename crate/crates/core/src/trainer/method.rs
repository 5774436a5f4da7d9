use std::fmt::Debug;

use super::objective::{lagrangian, penalized_cost, DualState};

/// How the dimming constraints enter the training objective.
pub trait TrainingMethod: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    /// Coefficient multiplying the gradient of `F_d` in the encoder update,
    /// i.e. the derivative of the objective w.r.t. `F_d`.
    fn constraint_weight(&self, residual: f64, lambda: f64, rho: f64) -> f64;

    /// Scalar objective that is minimized over the network parameters.
    fn objective(&self, cost: f64, residuals: &[f64], duals: &DualState) -> f64;

    /// Whether the multipliers take an ascent step after every batch.
    fn updates_duals(&self) -> bool;
}

/// Augmented Lagrangian with joint descent on the weights and ascent on the
/// multipliers.
#[derive(Clone, Copy, Debug, Default)]
pub struct PrimalDual;

impl TrainingMethod for PrimalDual {
    fn name(&self) -> &'static str {
        "primal-dual"
    }

    fn constraint_weight(&self, residual: f64, lambda: f64, rho: f64) -> f64 {
        lambda + 2.0 * rho * residual
    }

    fn objective(&self, cost: f64, residuals: &[f64], duals: &DualState) -> f64 {
        lagrangian(cost, residuals, duals)
    }

    fn updates_duals(&self) -> bool {
        true
    }
}

/// Fixed quadratic penalty `mu sum_d (F_d - d)^2`.
#[derive(Clone, Copy, Debug)]
pub struct Penalty {
    pub mu: f64,
}

impl TrainingMethod for Penalty {
    fn name(&self) -> &'static str {
        "penalty"
    }

    fn constraint_weight(&self, residual: f64, _lambda: f64, _rho: f64) -> f64 {
        2.0 * self.mu * residual
    }

    fn objective(&self, cost: f64, residuals: &[f64], _duals: &DualState) -> f64 {
        penalized_cost(cost, residuals, self.mu)
    }

    fn updates_duals(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_objective_derivatives() {
        let duals = DualState {
            targets: vec![2.0],
            lambdas: vec![0.3],
            rho: 0.01,
        };
        let h = 1e-6;
        for method in [&PrimalDual as &dyn TrainingMethod, &Penalty { mu: 0.5 }] {
            let r = 0.37;
            let fd = (method.objective(1.0, &[r + h], &duals) - method.objective(1.0, &[r - h], &duals)) / (2.0 * h);
            let w = method.constraint_weight(r, duals.lambdas[0], duals.rho);
            assert!((fd - w).abs() < 1e-8, "{}: {fd} vs {w}", method.name());
        }
    }

    #[test]
    fn zero_penalty_is_plain_cost() {
        let duals = DualState::new(&[1.0, 2.0], 3e-6);
        let p = Penalty { mu: 0.0 };
        assert_eq!(p.objective(0.8, &[0.5, -0.5], &duals), 0.8);
        assert_eq!(p.constraint_weight(0.5, 1.0, 1.0), 0.0);
    }
}
