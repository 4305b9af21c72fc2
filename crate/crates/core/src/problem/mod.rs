//! Canonical chance-constrained problem form
//!
//! ```text
//! min_{u in box} E[j(u, xi)]  s.t.  a_i . u <= b_i,   P(theta(u, xi) <= alpha) >= pi
//! ```
//!
//! The probability constraint is handled as `-P(u) <= -pi`. Linear rows are
//! dualized alongside it; the box stays in the primal projection.

mod noise;
mod portfolio;
mod toy;

pub use noise::{normal_cdf, normal_pdf, quintic_cdf, quintic_density, quintic_quantile, sample_noise, NoiseModel};
pub use portfolio::PortfolioProblem;
pub use toy::ToyProblem;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Componentwise bounds; entries may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AdmissibleBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::param(
                "box",
                format!("lower[{i}] = {} exceeds upper[{i}] = {}", lower[i], upper[i]),
            ));
        }
        Ok(AdmissibleBox { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        AdmissibleBox {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| lo <= v && v <= hi)
    }

    /// Euclidean projection, i.e. a componentwise clamp.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.project_unchecked(x))
    }

    pub(crate) fn project_unchecked(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| v.max(lo).min(hi))
            .collect()
    }
}

/// Free-function form of [`AdmissibleBox::project`].
pub fn project_admissible(x: &[f64], admissible: &AdmissibleBox) -> Result<Vec<f64>> {
    admissible.project(x)
}

/// Projection onto the nonnegative cone, optionally capped from above.
pub fn project_dual(lambda: &[f64], cap: Option<f64>) -> Vec<f64> {
    let cap = cap.unwrap_or(f64::INFINITY);
    lambda.iter().map(|&l| l.max(0.0).min(cap)).collect()
}

/// Dualized deterministic row `coeffs . u <= bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub bound: f64,
}

impl LinearConstraint {
    pub fn residual(&self, u: &[f64]) -> f64 {
        dot(&self.coeffs, u) - self.bound
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A problem with a scalar probability constraint `P(theta(u, xi) <= alpha) >= pi`.
///
/// Closed-form oracles are optional; they back the analysis tools and the
/// deterministic (mean-field) variants of the solver.
pub trait ChanceProblem: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;

    fn cost(&self, u: &[f64], xi: f64) -> f64;
    fn cost_grad(&self, u: &[f64], xi: f64) -> Vec<f64>;
    fn constraint(&self, u: &[f64], xi: f64) -> f64;
    fn constraint_grad(&self, u: &[f64], xi: f64) -> Vec<f64>;

    /// `alpha`.
    fn threshold(&self) -> f64;
    /// `pi`.
    fn prob_level(&self) -> f64;
    fn linear_constraints(&self) -> &[LinearConstraint];
    fn admissible(&self) -> &AdmissibleBox;
    fn noise(&self) -> &NoiseModel;

    /// Display names of the primal coordinates.
    fn primal_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("u{i}")).collect()
    }

    /// Number of dual variables: one per linear row plus the probability multiplier.
    fn dual_dim(&self) -> usize {
        self.linear_constraints().len() + 1
    }

    /// Noise values solving `theta(u, xi) = level`, used as quadrature breakpoints.
    fn level_crossings(&self, _u: &[f64], _level: f64) -> Vec<f64> {
        Vec::new()
    }

    /// Exact `P(u)`.
    fn probability(&self, _u: &[f64]) -> Result<f64> {
        Err(Error::OracleUnavailable("probability"))
    }

    /// Exact `grad P(u)`.
    fn probability_gradient(&self, _u: &[f64]) -> Result<Vec<f64>> {
        Err(Error::OracleUnavailable("probability gradient"))
    }

    /// Exact `grad E[j(u, xi)]`.
    fn mean_cost_grad(&self, _u: &[f64]) -> Result<Vec<f64>> {
        Err(Error::OracleUnavailable("expected cost gradient"))
    }

    /// Known primal-dual optimum `(u, lambda)`, duals in solver layout.
    fn reference_solution(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        Err(Error::OracleUnavailable("reference solution"))
    }

    /// Default starting point `(u, lambda)`.
    fn default_start(&self) -> (Vec<f64>, Vec<f64>);
}

/// Checks `alpha - theta >= 0` (the closed inequality counts as feasible).
pub fn indicator(problem: &dyn ChanceProblem, u: &[f64], xi: f64) -> bool {
    problem.constraint(u, xi) <= problem.threshold()
}

pub fn analytic_probability(problem: &dyn ChanceProblem, u: &[f64]) -> Result<f64> {
    problem.probability(u)
}

pub fn analytic_probability_gradient(problem: &dyn ChanceProblem, u: &[f64]) -> Result<Vec<f64>> {
    problem.probability_gradient(u)
}

/// Named problem instance with parameter overrides, as read from config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemSpec {
    Portfolio {
        #[serde(default = "portfolio::default_l")]
        l: f64,
        #[serde(default = "portfolio::default_b")]
        b: f64,
        #[serde(default = "portfolio::default_xi_bar")]
        xi_bar: f64,
        #[serde(default = "portfolio::default_sigma")]
        sigma: f64,
        #[serde(default = "portfolio::default_pi")]
        pi: f64,
    },
    Toy {
        #[serde(default = "toy::default_pi")]
        pi: f64,
        #[serde(default = "toy::default_mean")]
        mean: f64,
        #[serde(default = "toy::default_std_dev")]
        std_dev: f64,
    },
}

impl ProblemSpec {
    pub fn portfolio() -> Self {
        ProblemSpec::Portfolio {
            l: portfolio::default_l(),
            b: portfolio::default_b(),
            xi_bar: portfolio::default_xi_bar(),
            sigma: portfolio::default_sigma(),
            pi: portfolio::default_pi(),
        }
    }

    pub fn toy() -> Self {
        ProblemSpec::Toy {
            pi: toy::default_pi(),
            mean: toy::default_mean(),
            std_dev: toy::default_std_dev(),
        }
    }

    /// Default instance for a name (`"portfolio"` or `"toy"`).
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "portfolio" => Ok(Self::portfolio()),
            "toy" => Ok(Self::toy()),
            other => Err(Error::Config(format!("unknown problem `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Portfolio { .. } => "portfolio",
            ProblemSpec::Toy { .. } => "toy",
        }
    }

    pub fn with_prob_level(mut self, level: f64) -> Self {
        match &mut self {
            ProblemSpec::Portfolio { pi, .. } | ProblemSpec::Toy { pi, .. } => *pi = level,
        }
        self
    }

    pub fn build(&self) -> Result<Box<dyn ChanceProblem>> {
        Ok(match *self {
            ProblemSpec::Portfolio {
                l,
                b,
                xi_bar,
                sigma,
                pi,
            } => Box::new(PortfolioProblem::new(l, b, xi_bar, sigma, pi)?),
            ProblemSpec::Toy { pi, mean, std_dev } => Box::new(ToyProblem::with_noise(pi, mean, std_dev)?),
        })
    }
}

pub(crate) fn check_level(pi: f64) -> Result<()> {
    if pi > 0.0 && pi < 1.0 {
        Ok(())
    } else {
        Err(Error::param("pi", format!("must lie in (0, 1), got {pi}")))
    }
}
