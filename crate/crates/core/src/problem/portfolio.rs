//! Borrow-invest-consume portfolio with a repayment chance constraint.
//!
//! Decision `(u, v)`: fractions invested at the fixed rate `b` and at the
//! random rate `xi`. Cost `j = -f(1-u-v) - (1+b)u - (1+xi)v` with
//! `f(x) = -x^2/2 + 2x`; failure function `theta = (1+l) - (1+b)u - (1+xi)v`
//! with threshold 0, so `theta <= 0` means the loan can be repaid.

use super::{check_level, AdmissibleBox, ChanceProblem, LinearConstraint, NoiseModel};
use crate::error::{Error, Result};

pub(super) fn default_l() -> f64 {
    0.15
}
pub(super) fn default_b() -> f64 {
    0.2
}
pub(super) fn default_xi_bar() -> f64 {
    0.4
}
pub(super) fn default_sigma() -> f64 {
    3.0
}
pub(super) fn default_pi() -> f64 {
    0.24
}

#[derive(Debug, Clone)]
pub struct PortfolioProblem {
    pub l: f64,
    pub b: f64,
    pub pi: f64,
    noise: NoiseModel,
    admissible: AdmissibleBox,
    linear: Vec<LinearConstraint>,
}

impl Default for PortfolioProblem {
    fn default() -> Self {
        Self::new(
            default_l(),
            default_b(),
            default_xi_bar(),
            default_sigma(),
            default_pi(),
        )
        .expect("default portfolio parameters are valid")
    }
}

impl PortfolioProblem {
    pub fn new(l: f64, b: f64, xi_bar: f64, sigma: f64, pi: f64) -> Result<Self> {
        check_level(pi)?;
        Ok(PortfolioProblem {
            l,
            b,
            pi,
            noise: NoiseModel::quintic(xi_bar, sigma)?,
            admissible: AdmissibleBox::uniform(2, 0.0, 1.0)?,
            linear: vec![LinearConstraint {
                coeffs: vec![1.0, 1.0],
                bound: 1.0,
            }],
        })
    }

    /// `f'(1 - u - v)`.
    fn consumption_slope(u: &[f64]) -> f64 {
        2.0 - (1.0 - u[0] - u[1])
    }

    /// Fixed-rate position that repays the loan without risk, `(1+l)/(1+b)`.
    pub fn safe_position(&self) -> f64 {
        (1.0 + self.l) / (1.0 + self.b)
    }

    fn gap(&self, u: &[f64]) -> f64 {
        1.0 + self.l - (1.0 + self.b) * u[0]
    }

    /// Noise level at which the repayment constraint is exactly met (`v != 0`).
    fn critical_xi(&self, u: &[f64]) -> f64 {
        self.gap(u) / u[1] - 1.0
    }
}

impl ChanceProblem for PortfolioProblem {
    fn name(&self) -> &str {
        "portfolio"
    }

    fn dim(&self) -> usize {
        2
    }

    fn cost(&self, u: &[f64], xi: f64) -> f64 {
        let c = 1.0 - u[0] - u[1];
        let f = -0.5 * c * c + 2.0 * c;
        -f - (1.0 + self.b) * u[0] - (1.0 + xi) * u[1]
    }

    fn cost_grad(&self, u: &[f64], xi: f64) -> Vec<f64> {
        let s = Self::consumption_slope(u);
        vec![s - (1.0 + self.b), s - (1.0 + xi)]
    }

    fn constraint(&self, u: &[f64], xi: f64) -> f64 {
        self.gap(u) - (1.0 + xi) * u[1]
    }

    fn constraint_grad(&self, _u: &[f64], xi: f64) -> Vec<f64> {
        vec![-(1.0 + self.b), -(1.0 + xi)]
    }

    fn threshold(&self) -> f64 {
        0.0
    }

    fn prob_level(&self) -> f64 {
        self.pi
    }

    fn linear_constraints(&self) -> &[LinearConstraint] {
        &self.linear
    }

    fn admissible(&self) -> &AdmissibleBox {
        &self.admissible
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn primal_names(&self) -> Vec<String> {
        vec!["u".into(), "v".into()]
    }

    fn level_crossings(&self, u: &[f64], level: f64) -> Vec<f64> {
        if u[1] == 0.0 {
            Vec::new()
        } else {
            vec![(self.gap(u) - level) / u[1] - 1.0]
        }
    }

    fn probability(&self, u: &[f64]) -> Result<f64> {
        let v = u[1];
        Ok(if v > 0.0 {
            self.noise.survival(self.critical_xi(u))
        } else if v < 0.0 {
            self.noise.cdf(self.critical_xi(u))
        } else if self.gap(u) <= 0.0 {
            1.0
        } else {
            0.0
        })
    }

    fn probability_gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        let v = u[1];
        if v == 0.0 {
            return Err(Error::GradientUndefined(u.to_vec()));
        }
        // P = 1 - F(xi*) for v > 0 and F(xi*) for v < 0; xi* = gap/v - 1
        let q = self.noise.density(self.critical_xi(u));
        let sign = if v > 0.0 { 1.0 } else { -1.0 };
        let d_u = (1.0 + self.b) / v;
        let d_v = self.gap(u) / (v * v);
        Ok(vec![sign * q * d_u, sign * q * d_v])
    }

    fn mean_cost_grad(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.cost_grad(u, self.noise.mean()))
    }

    /// Optimum in the regime where the fixed-rate asset is unused: `u = 0`,
    /// `P(0, v) = pi`, the budget row slack.
    fn reference_solution(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let p_at = |v: f64| self.probability(&[0.0, v]).unwrap_or(0.0);
        if p_at(1.0) < self.pi {
            return Err(Error::Numerical(format!(
                "level {} unreachable with u = 0; the optimum leaves the u = 0 regime",
                self.pi
            )));
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while hi - lo > 1e-15 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if p_at(mid) < self.pi {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let v = 0.5 * (lo + hi);
        let x = [0.0, v];
        let grad_j = self.mean_cost_grad(&x)?;
        let grad_p = self.probability_gradient(&x)?;
        let lambda_p = grad_j[1] / grad_p[1];
        let u_slack = grad_j[0] - lambda_p * grad_p[0];
        if lambda_p < 0.0 || u_slack < 0.0 {
            return Err(Error::Numerical(format!(
                "level {}: u = 0 is not stationary (multiplier {lambda_p}, u-gradient {u_slack})",
                self.pi
            )));
        }
        Ok((x.to_vec(), vec![0.0, lambda_p]))
    }

    fn default_start(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.2, 0.8], vec![0.5, 0.3])
    }
}
