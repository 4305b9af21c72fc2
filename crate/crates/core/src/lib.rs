//! Stochastic Arrow-Hurwicz primal-dual solver for optimization problems
//! under a single probability (chance) constraint
//!
//! ```text
//! min_{u in U_ad} E[j(u, xi)]   s.t.   P(theta(u, xi) <= alpha) >= pi
//! ```
//!
//! The probability constraint is dualized as `-P(u) <= -pi` and its gradient
//! is estimated from one noise sample per iteration, either by convolving the
//! indicator with a mollifier kernel (AC) or by symmetric finite differences
//! of the indicator (FD). Both estimators are biased; [`schedules`] picks the
//! step-size and smoothing exponents that keep the stochastic iteration on
//! its mean-field ODE and predicts the resulting convergence rate.
//!
//! Module map:
//! - [`problem`]: canonical problem form, the toy and portfolio instances,
//!   noise models, projections and closed-form probability oracles.
//! - [`kernels`]: mollifier catalog with exact moments.
//! - [`estimators`]: indicator, AC and FD estimators.
//! - [`schedules`]: step/smoothing schedules, condition checks, rate prediction.
//! - [`solver`]: the primal-dual iteration and KT utilities.
//! - [`analysis`]: quadrature bias/variance oracle, MQE tuning, mean-field ODE,
//!   linearization, CLT diagnostics.
//! - [`harness`]: replicated experiments with common random numbers, CSV and
//!   gnuplot output.

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod kernels;
pub mod problem;
pub mod quadrature;
pub mod schedules;
pub mod solver;

pub use error::{Error, Result};
pub use estimators::{DualEstimateMode, EstimatorConfig, EstimatorKind};
pub use kernels::MollifierKernel;
pub use problem::{AdmissibleBox, ChanceProblem, LinearConstraint, NoiseModel, ProblemSpec};
pub use schedules::{Hypothesis, RateTuning, SmoothingSchedule, StepSchedule};
pub use solver::{IterateState, RunConfig, Trajectory};
