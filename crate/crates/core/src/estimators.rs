//! Single-sample estimators of `P(u)` and `P'(u)`.
//!
//! The raw indicator is unbiased for `P(u)` but useless for its gradient.
//! The AC estimator replaces it by a mollified version of radius `r`; the FD
//! estimator takes symmetric differences of the indicator with step `c`,
//! sharing one noise sample between the two evaluations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::MollifierKernel;
use crate::problem::{self, ChanceProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// Mollified indicator (approximation by convolution).
    Ac,
    /// Symmetric finite differences of the indicator.
    Fd,
    /// Closed-form expectations. Turns the solver into the deterministic
    /// Arrow-Hurwicz iteration; only for problems exposing oracles.
    Exact,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Ac => "ac",
            EstimatorKind::Fd => "fd",
            EstimatorKind::Exact => "exact",
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "ac" => Ok(EstimatorKind::Ac),
            "fd" => Ok(EstimatorKind::Fd),
            "exact" => Ok(EstimatorKind::Exact),
            _ => Err(Error::Config(format!("unknown estimator `{name}`"))),
        }
    }

    /// Dual estimate used when the config leaves it unspecified.
    pub fn default_dual_mode(&self) -> DualEstimateMode {
        match self {
            EstimatorKind::Ac => DualEstimateMode::Mollified,
            EstimatorKind::Fd | EstimatorKind::Exact => DualEstimateMode::Raw,
        }
    }
}

/// Which estimate of `P(u^{k+1})` drives the probability multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualEstimateMode {
    Raw,
    Mollified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    #[serde(default)]
    pub kernel: MollifierKernel,
    /// `r` for AC, `c` for FD. Ignored by `Exact`.
    pub smoothing: f64,
    #[serde(default)]
    pub dual_estimate_mode: Option<DualEstimateMode>,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind, smoothing: f64) -> Result<Self> {
        let cfg = EstimatorConfig {
            kind,
            kernel: MollifierKernel::default(),
            smoothing,
            dual_estimate_mode: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.smoothing.is_finite() && self.smoothing > 0.0) {
            return Err(Error::param(
                "smoothing",
                format!("must be positive, got {}", self.smoothing),
            ));
        }
        Ok(())
    }

    pub fn with_smoothing(mut self, smoothing: f64) -> Self {
        self.smoothing = smoothing;
        self
    }

    pub fn dual_mode(&self) -> DualEstimateMode {
        self.dual_estimate_mode.unwrap_or_else(|| self.kind.default_dual_mode())
    }

    /// Estimate of `P'(u)` from one sample.
    pub fn gradient(&self, problem: &dyn ChanceProblem, u: &[f64], xi: f64) -> Result<Vec<f64>> {
        match self.kind {
            EstimatorKind::Ac => Ok(ac_gradient_estimate(problem, u, xi, &self.kernel, self.smoothing)),
            EstimatorKind::Fd => Ok(fd_gradient_estimate(problem, u, xi, self.smoothing)),
            EstimatorKind::Exact => problem.probability_gradient(u),
        }
    }

    /// Estimate of `P(u)` fed to the dual update.
    pub fn probability(&self, problem: &dyn ChanceProblem, u: &[f64], xi: f64) -> Result<f64> {
        if self.kind == EstimatorKind::Exact {
            return problem.probability(u);
        }
        Ok(match self.dual_mode() {
            DualEstimateMode::Raw => indicator_estimate(problem, u, xi),
            DualEstimateMode::Mollified => ac_probability_estimate(problem, u, xi, &self.kernel, self.smoothing),
        })
    }
}

/// 1 when `theta(u, xi) <= alpha`, else 0.
pub fn indicator_estimate(problem: &dyn ChanceProblem, u: &[f64], xi: f64) -> f64 {
    if problem::indicator(problem, u, xi) {
        1.0
    } else {
        0.0
    }
}

/// `1 - H((theta - alpha) / r)`.
pub fn ac_probability_estimate(
    problem: &dyn ChanceProblem,
    u: &[f64],
    xi: f64,
    kernel: &MollifierKernel,
    r: f64,
) -> f64 {
    let z = (problem.constraint(u, xi) - problem.threshold()) / r;
    1.0 - kernel.cumulative(z)
}

/// `-(1/r) h((theta - alpha) / r) theta'_u`.
pub fn ac_gradient_estimate(
    problem: &dyn ChanceProblem,
    u: &[f64],
    xi: f64,
    kernel: &MollifierKernel,
    r: f64,
) -> Vec<f64> {
    let z = (problem.constraint(u, xi) - problem.threshold()) / r;
    let w = kernel.evaluate(z) / r;
    if w == 0.0 {
        return vec![0.0; u.len()];
    }
    problem.constraint_grad(u, xi).into_iter().map(|g| -w * g).collect()
}

/// Component `j` is `[I(u + c e_j) - I(u - c e_j)] / (2c)` with a shared sample.
pub fn fd_gradient_estimate(problem: &dyn ChanceProblem, u: &[f64], xi: f64, c: f64) -> Vec<f64> {
    let mut shifted = u.to_vec();
    (0..u.len())
        .map(|j| {
            shifted[j] = u[j] + c;
            let up = indicator_estimate(problem, &shifted, xi);
            shifted[j] = u[j] - c;
            let down = indicator_estimate(problem, &shifted, xi);
            shifted[j] = u[j];
            (up - down) / (2.0 * c)
        })
        .collect()
}
