//! Stochastic Arrow-Hurwicz iteration
//!
//! ```text
//! u   <- Proj_U(u - eps (grad_u j(u, xi) + sum_i lambda_i a_i - lambda_P g_P(u, xi)))
//! l_i <- max(0, l_i + rho (a_i . u_new - b_i))
//! l_P <- max(0, l_P + rho (pi - P_hat(u_new, xi)))
//! ```
//!
//! with one fresh sample `xi` per iteration shared by both half-steps. The
//! dual vector holds the linear-row multipliers first, then `lambda_P`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{DualEstimateMode, EstimatorConfig, EstimatorKind};
use crate::kernels::MollifierKernel;
use crate::problem::{self, ChanceProblem, ProblemSpec, ToyProblem};
use crate::schedules::{self, Hypothesis, Schedules, SmoothingSchedule, StepSchedule};

/// Iterates whose Euclidean norm exceeds this are declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateState {
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub k: usize,
}

impl IterateState {
    pub fn new(u: Vec<f64>, lambda: Vec<f64>) -> Self {
        IterateState { u, lambda, k: 0 }
    }

    /// `x = (u, lambda)`.
    pub fn flat(&self) -> Vec<f64> {
        self.u.iter().chain(&self.lambda).copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.u.iter().chain(&self.lambda).map(|x| x * x).sum::<f64>().sqrt()
    }

    fn is_sane(&self) -> bool {
        self.u.iter().chain(&self.lambda).all(|x| x.is_finite()) && self.norm() <= DIVERGENCE_NORM
    }

    pub fn check_dims(&self, problem: &dyn ChanceProblem) -> Result<()> {
        if self.u.len() != problem.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                got: self.u.len(),
            });
        }
        if self.lambda.len() != problem.dual_dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.dual_dim(),
                got: self.lambda.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    /// Strictly increasing in `k`; starts with the initial state.
    pub records: Vec<IterateState>,
    pub terminal: IterateState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Everything needed for one run. Scale `a` drives AC smoothing, `b` drives
/// FD smoothing; both decay as `k^-(beta/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "ProblemSpec::portfolio")]
    pub problem: ProblemSpec,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub kernel: MollifierKernel,
    #[serde(default)]
    pub dual_estimate_mode: Option<DualEstimateMode>,
    #[serde(default)]
    pub hypothesis: Hypothesis,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_d")]
    pub d: f64,
    #[serde(default = "default_e")]
    pub e: f64,
    #[serde(default = "default_f")]
    pub f: f64,
    #[serde(default = "default_g")]
    pub g: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Defaults to the optimal exponent for the estimator and hypothesis.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub initial: Option<InitialState>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Defaults to 1 for up to 5000 iterations, `iterations / 5000` beyond.
    #[serde(default)]
    pub record_stride: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lambda_cap: Option<f64>,
}

fn default_estimator() -> EstimatorKind {
    EstimatorKind::Ac
}
fn default_a() -> f64 {
    1.30
}
fn default_b() -> f64 {
    0.63
}
fn default_d() -> f64 {
    1.0
}
fn default_e() -> f64 {
    2.0
}
fn default_f() -> f64 {
    1.0
}
fn default_g() -> f64 {
    2.0
}
fn default_gamma() -> f64 {
    1.0
}
fn default_iterations() -> usize {
    5000
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or_else(|| {
            schedules::exponent_to_f64(schedules::optimal_tuning(self.estimator, self.hypothesis).beta)
        })
    }

    pub fn schedules(&self) -> Result<Schedules> {
        let scale = match self.estimator {
            EstimatorKind::Fd => self.b,
            _ => self.a,
        };
        Ok(Schedules {
            step: StepSchedule::with_exponent(self.d, self.e, self.gamma)?,
            dual_step: StepSchedule::with_exponent(self.f, self.g, self.gamma)?,
            smoothing: SmoothingSchedule::for_beta(scale, self.beta())?,
        })
    }

    /// Estimator with smoothing set to its `k = 1` value.
    pub fn estimator_config(&self) -> Result<EstimatorConfig> {
        let s = self.schedules()?;
        Ok(EstimatorConfig {
            kind: self.estimator,
            kernel: self.kernel,
            smoothing: s.smoothing.at(1),
            dual_estimate_mode: self.dual_estimate_mode,
        })
    }

    pub fn stride(&self) -> usize {
        match self.record_stride {
            Some(s) => s.max(1),
            None if self.iterations <= 5000 => 1,
            None => self.iterations / 5000,
        }
    }

    pub fn initial_state(&self, problem: &dyn ChanceProblem) -> Result<IterateState> {
        let state = match &self.initial {
            Some(init) => IterateState::new(init.u.clone(), init.lambda.clone()),
            None => {
                let (u, lambda) = problem.default_start();
                IterateState::new(u, lambda)
            }
        };
        state.check_dims(problem)?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedules()?;
        if let Some(cap) = self.lambda_cap {
            if !(cap > 0.0) {
                return Err(Error::param("lambda_cap", format!("must be positive, got {cap}")));
            }
        }
        if self.record_stride == Some(0) {
            return Err(Error::param("record_stride", "must be at least 1"));
        }
        Ok(())
    }
}

/// One iteration out of `state` with a given sample `xi`, steps `eps`,
/// `rho` and an estimator already set to the current smoothing.
pub fn step_with_sample(
    state: &IterateState,
    problem: &dyn ChanceProblem,
    estimator: &EstimatorConfig,
    eps: f64,
    rho: f64,
    xi: f64,
    lambda_cap: Option<f64>,
) -> Result<IterateState> {
    let rows = problem.linear_constraints();
    let m = rows.len();
    let u = &state.u;
    let lp = state.lambda[m];

    let mut direction = match estimator.kind {
        EstimatorKind::Exact => problem.mean_cost_grad(u)?,
        _ => problem.cost_grad(u, xi),
    };
    for (row, &li) in rows.iter().zip(&state.lambda) {
        for (dj, aj) in direction.iter_mut().zip(&row.coeffs) {
            *dj += li * aj;
        }
    }
    if lp != 0.0 {
        let g = estimator.gradient(problem, u, xi)?;
        for (dj, gj) in direction.iter_mut().zip(g) {
            *dj -= lp * gj;
        }
    }
    let trial: Vec<f64> = u.iter().zip(&direction).map(|(x, d)| x - eps * d).collect();
    let u_new = problem.admissible().project_unchecked(&trial);

    let mut lambda: Vec<f64> = rows
        .iter()
        .zip(&state.lambda)
        .map(|(row, li)| li + rho * row.residual(&u_new))
        .collect();
    let p_hat = estimator.probability(problem, &u_new, xi)?;
    lambda.push(lp + rho * (problem.prob_level() - p_hat));

    let next = IterateState {
        u: u_new,
        lambda: problem::project_dual(&lambda, lambda_cap),
        k: state.k + 1,
    };
    if !next.is_sane() {
        return Err(Error::Divergence {
            k: next.k,
            state: Box::new(next),
        });
    }
    Ok(next)
}

/// Draws `xi^{k+1}` and applies [`step_with_sample`] with schedules at `k + 1`.
pub fn arrow_hurwicz_step<R: rand::Rng + ?Sized>(
    state: &IterateState,
    problem: &dyn ChanceProblem,
    estimator: &EstimatorConfig,
    schedules: &Schedules,
    lambda_cap: Option<f64>,
    rng: &mut R,
) -> Result<IterateState> {
    let (eps, rho, smoothing) = schedules::evaluate_schedules(schedules, state.k + 1)?;
    let xi = problem.noise().sample(rng);
    let est = estimator.with_smoothing(smoothing);
    step_with_sample(state, problem, &est, eps, rho, xi, lambda_cap)
}

pub fn run(config: &RunConfig) -> Result<Trajectory> {
    let problem = config.problem.build()?;
    run_problem(problem.as_ref(), config)
}

/// [`run`] on an already-built problem (which must match `config.problem`
/// only where the caller wants it to).
pub fn run_problem(problem: &dyn ChanceProblem, config: &RunConfig) -> Result<Trajectory> {
    config.validate()?;
    let schedules = config.schedules()?;
    let estimator = config.estimator_config()?;
    if config.estimator != EstimatorKind::Exact {
        let (gamma, beta) = schedules.exponents()?;
        let report = schedules::check_conditions(config.estimator, config.hypothesis, gamma, beta);
        if !report.passed() {
            log::warn!("schedule exponents violate the convergence conditions: {report}");
        }
    }
    let stride = config.stride();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = config.initial_state(problem)?;
    let mut records = vec![state.clone()];
    for _ in 0..config.iterations {
        state = match arrow_hurwicz_step(&state, problem, &estimator, &schedules, config.lambda_cap, &mut rng) {
            Ok(s) => s,
            Err(Error::Divergence { k, .. }) => {
                let last = records.pop().expect("initial state is recorded");
                return Err(Error::Divergence {
                    k,
                    state: Box::new(last),
                });
            }
            Err(e) => return Err(e),
        };
        if state.k % stride == 0 {
            records.push(state.clone());
        }
    }
    Ok(Trajectory {
        seed: config.seed,
        records,
        terminal: state,
    })
}

/// Fixed-point gap of the projected KT system with exact expectations.
pub fn kt_residual(problem: &dyn ChanceProblem, u: &[f64], lambda: &[f64], eps: f64, rho: f64) -> Result<f64> {
    let state = IterateState::new(u.to_vec(), lambda.to_vec());
    state.check_dims(problem)?;
    let m = problem.linear_constraints().len();
    let mut grad = problem.mean_cost_grad(u)?;
    let gp = problem.probability_gradient(u)?;
    for (row, &li) in problem.linear_constraints().iter().zip(lambda) {
        for (gj, aj) in grad.iter_mut().zip(&row.coeffs) {
            *gj += li * aj;
        }
    }
    for (gj, pj) in grad.iter_mut().zip(&gp) {
        *gj -= lambda[m] * pj;
    }
    let trial: Vec<f64> = u.iter().zip(&grad).map(|(x, g)| x - eps * g).collect();
    let proj = problem.admissible().project(&trial)?;
    let primal: f64 = u.iter().zip(&proj).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();

    let mut dual_trial: Vec<f64> = problem
        .linear_constraints()
        .iter()
        .zip(lambda)
        .map(|(row, li)| li + rho * row.residual(u))
        .collect();
    dual_trial.push(lambda[m] + rho * (problem.prob_level() - problem.probability(u)?));
    let dual_proj = problem::project_dual(&dual_trial, None);
    let dual: f64 = lambda
        .iter()
        .zip(&dual_proj)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(primal + dual)
}

/// KT point of the Gaussian toy problem at level `pi`.
pub fn solve_toy_deterministic(pi: f64) -> Result<(f64, f64)> {
    ToyProblem::new(pi)?.kt_point()
}
