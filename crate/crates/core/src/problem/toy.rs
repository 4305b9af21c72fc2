//! One-dimensional instance `min (u-1)^2/2  s.t.  P(u <= xi) >= pi`,
//! `xi ~ N(mean, std_dev^2)`. Its unconstrained optimum sits deep in the
//! noise tail, where the constraint gradient is numerically zero.

use statrs::distribution::{ContinuousCDF, Normal};

use super::noise::{normal_cdf, normal_pdf};
use super::{check_level, AdmissibleBox, ChanceProblem, LinearConstraint, NoiseModel};
use crate::error::{Error, Result};

pub(super) fn default_pi() -> f64 {
    0.7
}
pub(super) fn default_mean() -> f64 {
    -2.0
}
pub(super) fn default_std_dev() -> f64 {
    0.1
}

#[derive(Debug, Clone)]
pub struct ToyProblem {
    pub pi: f64,
    mean: f64,
    std_dev: f64,
    noise: NoiseModel,
    admissible: AdmissibleBox,
}

impl ToyProblem {
    pub fn new(pi: f64) -> Result<Self> {
        Self::with_noise(pi, default_mean(), default_std_dev())
    }

    pub fn with_noise(pi: f64, mean: f64, std_dev: f64) -> Result<Self> {
        check_level(pi)?;
        Ok(ToyProblem {
            pi,
            mean,
            std_dev,
            noise: NoiseModel::gaussian(mean, std_dev)?,
            admissible: AdmissibleBox::unbounded(1),
        })
    }

    /// KT point `(u, lambda)` from `P(u) = pi` and `(u - 1) = lambda P'(u)`;
    /// `(1, 0)` when the unconstrained optimum is already feasible.
    pub fn kt_point(&self) -> Result<(f64, f64)> {
        if normal_cdf(-(1.0 - self.mean) / self.std_dev) >= self.pi {
            return Ok((1.0, 0.0));
        }
        let standard = Normal::new(0.0, 1.0).map_err(|e| Error::Numerical(e.to_string()))?;
        // P(u) = 1 - Phi(z) = pi
        let mut z = standard.inverse_cdf(1.0 - self.pi);
        for _ in 0..50 {
            let step = (normal_cdf(z) - (1.0 - self.pi)) / normal_pdf(z);
            z -= step;
            if step.abs() < 1e-14 {
                break;
            }
        }
        let u = self.mean + self.std_dev * z;
        let lambda = (1.0 - u) * self.std_dev / normal_pdf(z);
        Ok((u, lambda))
    }
}

impl ChanceProblem for ToyProblem {
    fn name(&self) -> &str {
        "toy"
    }

    fn dim(&self) -> usize {
        1
    }

    fn cost(&self, u: &[f64], _xi: f64) -> f64 {
        0.5 * (u[0] - 1.0).powi(2)
    }

    fn cost_grad(&self, u: &[f64], _xi: f64) -> Vec<f64> {
        vec![u[0] - 1.0]
    }

    fn constraint(&self, u: &[f64], xi: f64) -> f64 {
        u[0] - xi
    }

    fn constraint_grad(&self, _u: &[f64], _xi: f64) -> Vec<f64> {
        vec![1.0]
    }

    fn threshold(&self) -> f64 {
        0.0
    }

    fn prob_level(&self) -> f64 {
        self.pi
    }

    fn linear_constraints(&self) -> &[LinearConstraint] {
        &[]
    }

    fn admissible(&self) -> &AdmissibleBox {
        &self.admissible
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn primal_names(&self) -> Vec<String> {
        vec!["u".into()]
    }

    fn level_crossings(&self, u: &[f64], level: f64) -> Vec<f64> {
        vec![u[0] - level]
    }

    fn probability(&self, u: &[f64]) -> Result<f64> {
        Ok(self.noise.survival(u[0]))
    }

    fn probability_gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![-self.noise.density(u[0])])
    }

    fn mean_cost_grad(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.cost_grad(u, 0.0))
    }

    fn reference_solution(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (u, lambda) = self.kt_point()?;
        Ok((vec![u], vec![lambda]))
    }

    fn default_start(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-2.5], vec![1.0])
    }
}
