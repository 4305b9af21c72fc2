//! Deterministic analysis tools: exact estimator moments by quadrature, MQE
//! tuning of the smoothing parameter, the mean-field ODE, linearization at
//! an equilibrium and empirical CLT diagnostics.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{self, EstimatorConfig, EstimatorKind};
use crate::problem::{self, ChanceProblem};
use crate::quadrature;
use crate::schedules::{exponent_to_f64, RateTuning};
use crate::solver::{IterateState, Trajectory};

/// Absolute tolerance of every moment integral.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Central-difference step for second derivatives.
pub const HESSIAN_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceReport {
    pub smoothing: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// `mean - P'(u)`
    pub bias: Vec<f64>,
    /// `sum_j variance_j / N + sum_j bias_j^2`
    pub mqe: f64,
}

/// Points where the estimator, as a function of `xi`, jumps or has a kink.
fn estimator_breakpoints(problem: &dyn ChanceProblem, est: &EstimatorConfig, u: &[f64]) -> Vec<f64> {
    let alpha = problem.threshold();
    let mut pts = problem.noise().density_breakpoints();
    match est.kind {
        EstimatorKind::Ac => {
            let s = est.smoothing;
            let mut levels = vec![alpha - s, alpha, alpha + s];
            levels.extend(est.kernel.kinks().iter().map(|z| alpha + s * z));
            for level in levels {
                pts.extend(problem.level_crossings(u, level));
            }
        }
        EstimatorKind::Fd => {
            let mut shifted = u.to_vec();
            for j in 0..u.len() {
                for sign in [1.0, -1.0] {
                    shifted[j] = u[j] + sign * est.smoothing;
                    pts.extend(problem.level_crossings(&shifted, alpha));
                }
                shifted[j] = u[j];
            }
        }
        EstimatorKind::Exact => {}
    }
    pts
}

/// Mean and variance of each component of the gradient estimate at `u`,
/// integrated against the noise density.
pub fn bias_variance_oracle(
    problem: &dyn ChanceProblem,
    estimator: &EstimatorConfig,
    u: &[f64],
    n: f64,
) -> Result<BiasVarianceReport> {
    estimator.validate()?;
    if estimator.kind == EstimatorKind::Exact {
        return Err(Error::Config("the exact oracle has no sampling distribution".into()));
    }
    if !(n > 0.0) {
        return Err(Error::param("N", format!("must be positive, got {n}")));
    }
    if u.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: u.len(),
        });
    }
    let exact = problem::analytic_probability_gradient(problem, u)?;
    let noise = problem.noise();
    let (lo, hi) = noise.support();
    let cuts = estimator_breakpoints(problem, estimator, u);
    let sample = |xi: f64| -> Vec<f64> {
        match estimator.kind {
            EstimatorKind::Ac => {
                estimators::ac_gradient_estimate(problem, u, xi, &estimator.kernel, estimator.smoothing)
            }
            _ => estimators::fd_gradient_estimate(problem, u, xi, estimator.smoothing),
        }
    };
    let mut mean = Vec::with_capacity(u.len());
    let mut variance = Vec::with_capacity(u.len());
    for j in 0..u.len() {
        let m1 = quadrature::adaptive(|xi| sample(xi)[j] * noise.density(xi), lo, hi, &cuts, QUADRATURE_TOL);
        let m2 = quadrature::adaptive(
            |xi| sample(xi)[j].powi(2) * noise.density(xi),
            lo,
            hi,
            &cuts,
            QUADRATURE_TOL,
        );
        mean.push(m1);
        variance.push((m2 - m1 * m1).max(0.0));
    }
    let bias: Vec<f64> = mean.iter().zip(&exact).map(|(m, e)| m - e).collect();
    let mqe = variance.iter().sum::<f64>() / n + bias.iter().map(|b| b * b).sum::<f64>();
    Ok(BiasVarianceReport {
        smoothing: estimator.smoothing,
        mean,
        variance,
        bias,
        mqe,
    })
}

/// Oracle reports over a grid of smoothing values.
pub fn bias_variance_sweep(
    problem: &dyn ChanceProblem,
    estimator: &EstimatorConfig,
    u: &[f64],
    grid: &[f64],
    n: f64,
) -> Result<Vec<BiasVarianceReport>> {
    grid.iter()
        .map(|&s| bias_variance_oracle(problem, &estimator.with_smoothing(s), u, n))
        .collect()
}

/// CSV with columns `smoothing, mean_0.., var_0.., bias_0.., mqe`.
pub fn sweep_csv(reports: &[BiasVarianceReport]) -> String {
    let dim = reports.first().map_or(0, |r| r.mean.len());
    let mut out = String::from("smoothing");
    for prefix in ["mean", "var", "bias"] {
        for j in 0..dim {
            write!(out, ",{prefix}_{j}").unwrap();
        }
    }
    out.push_str(",mqe\n");
    for r in reports {
        write!(out, "{:.8e}", r.smoothing).unwrap();
        for x in r.mean.iter().chain(&r.variance).chain(&r.bias) {
            write!(out, ",{x:.8e}").unwrap();
        }
        writeln!(out, ",{:.8e}", r.mqe).unwrap();
    }
    out
}

pub fn write_sweep_csv(reports: &[BiasVarianceReport], path: &Path) -> Result<()> {
    std::fs::write(path, sweep_csv(reports))?;
    Ok(())
}

/// Least-squares line `y = intercept + slope x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::Numerical("a line fit needs at least two points".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Numerical("degenerate abscissae in line fit".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

/// Leading constants of `variance ~ A/s` and `|bias| ~ B s^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MqeConstants {
    pub a: f64,
    pub b: f64,
}

/// `A = sum_j lim s var_j(s)` and `B = |lim bias(s) / s^2|`, each limit taken
/// as the intercept of a line fit on the grid.
pub fn fit_mqe_constants(
    problem: &dyn ChanceProblem,
    estimator: &EstimatorConfig,
    u: &[f64],
    grid: &[f64],
) -> Result<MqeConstants> {
    let reports = bias_variance_sweep(problem, estimator, u, grid, 1.0)?;
    let s: Vec<f64> = grid.to_vec();
    let s2: Vec<f64> = grid.iter().map(|x| x * x).collect();
    let mut a = 0.0;
    let mut b2 = 0.0;
    for j in 0..u.len() {
        let vs: Vec<f64> = reports.iter().map(|r| r.variance[j] * r.smoothing).collect();
        a += linear_fit(&s, &vs)?.0;
        let bs: Vec<f64> = reports
            .iter()
            .map(|r| r.bias[j] / (r.smoothing * r.smoothing))
            .collect();
        b2 += linear_fit(&s2, &bs)?.0.powi(2);
    }
    Ok(MqeConstants { a, b: b2.sqrt() })
}

/// `r* = (A / (4 B^2 N))^{1/5}` and `MQE* = 5 A^{4/5} B^{2/5} / (4N)^{4/5}`.
pub fn optimal_smoothing(a: f64, b: f64, n: f64) -> Result<(f64, f64)> {
    for (name, x) in [("A", a), ("B", b), ("N", n)] {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::param(name, format!("must be positive, got {x}")));
        }
    }
    let r = (a / (4.0 * b * b * n)).powf(0.2);
    let mqe = 5.0 * a.powf(0.8) * b.powf(0.4) / (4.0 * n).powf(0.8);
    Ok((r, mqe))
}

/// Drift `-Psi(x)` of the mean-field ODE, laid out as `x = (u, lambda)`:
/// `(-grad J - sum_i l_i a_i + l_P grad P, a_i . u - b_i, pi - P(u))`.
pub fn mean_field(problem: &dyn ChanceProblem, u: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
    IterateState::new(u.to_vec(), lambda.to_vec()).check_dims(problem)?;
    let rows = problem.linear_constraints();
    let m = rows.len();
    let mut drift: Vec<f64> = problem.mean_cost_grad(u)?.into_iter().map(|g| -g).collect();
    for (row, &li) in rows.iter().zip(lambda) {
        for (dj, aj) in drift.iter_mut().zip(&row.coeffs) {
            *dj -= li * aj;
        }
    }
    let gp = problem.probability_gradient(u)?;
    for (dj, pj) in drift.iter_mut().zip(&gp) {
        *dj += lambda[m] * pj;
    }
    drift.extend(rows.iter().map(|row| row.residual(u)));
    drift.push(problem.prob_level() - problem.probability(u)?);
    Ok(drift)
}

fn project_state(problem: &dyn ChanceProblem, x: &[f64]) -> Vec<f64> {
    let n = problem.dim();
    let mut out = problem.admissible().project_unchecked(&x[..n]);
    out.extend(problem::project_dual(&x[n..], None));
    out
}

/// Point of an ODE path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdePoint {
    pub t: f64,
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// RK4 on `x' = -Psi(x)`, projecting onto the box and cone after each step
/// (and at each stage). The path starts with the initial state.
pub fn ode_integrate(
    problem: &dyn ChanceProblem,
    initial: &IterateState,
    horizon: f64,
    dt: f64,
) -> Result<Vec<OdePoint>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    if !(horizon >= 0.0) {
        return Err(Error::param("horizon", format!("must be nonnegative, got {horizon}")));
    }
    initial.check_dims(problem)?;
    let n = problem.dim();
    let field = |x: &[f64]| mean_field(problem, &x[..n], &x[n..]);
    let axpy = |x: &[f64], h: f64, k: &[f64]| -> Vec<f64> {
        let y: Vec<f64> = x.iter().zip(k).map(|(a, b)| a + h * b).collect();
        project_state(problem, &y)
    };
    let mut x = initial.flat();
    let steps = (horizon / dt).round() as usize;
    let mut path = Vec::with_capacity(steps + 1);
    path.push(OdePoint {
        t: 0.0,
        u: x[..n].to_vec(),
        lambda: x[n..].to_vec(),
    });
    for i in 1..=steps {
        let k1 = field(&x)?;
        let k2 = field(&axpy(&x, 0.5 * dt, &k1))?;
        let k3 = field(&axpy(&x, 0.5 * dt, &k2))?;
        let k4 = field(&axpy(&x, dt, &k3))?;
        let incr: Vec<f64> = (0..x.len())
            .map(|j| (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0)
            .collect();
        x = axpy(&x, dt, &incr);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "ODE state became non-finite at t = {}",
                i as f64 * dt
            )));
        }
        path.push(OdePoint {
            t: i as f64 * dt,
            u: x[..n].to_vec(),
            lambda: x[n..].to_vec(),
        });
    }
    Ok(path)
}

/// Variables kept in the linearization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSet {
    pub primal: Vec<usize>,
    pub linear: Vec<usize>,
}

impl ActiveSet {
    /// Every primal coordinate, the linear rows holding with equality (to
    /// `tol`) and the probability multiplier.
    pub fn full(problem: &dyn ChanceProblem, u: &[f64], tol: f64) -> Self {
        ActiveSet {
            primal: (0..problem.dim()).collect(),
            linear: saturated_rows(problem, u, tol),
        }
    }

    /// As [`ActiveSet::full`], dropping primal coordinates sitting on a bound.
    pub fn reduced(problem: &dyn ChanceProblem, u: &[f64], tol: f64) -> Self {
        let bx = problem.admissible();
        let primal = (0..problem.dim())
            .filter(|&j| (u[j] - bx.lower[j]).abs() > tol && (u[j] - bx.upper[j]).abs() > tol)
            .collect();
        ActiveSet {
            primal,
            linear: saturated_rows(problem, u, tol),
        }
    }
}

fn saturated_rows(problem: &dyn ChanceProblem, u: &[f64], tol: f64) -> Vec<usize> {
    problem
        .linear_constraints()
        .iter()
        .enumerate()
        .filter(|(_, row)| row.residual(u).abs() <= tol)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationReport {
    pub variables: Vec<String>,
    /// Row-major Jacobian of `Psi` on the active variables.
    pub matrix: Vec<Vec<f64>>,
    /// `(re, im)`, sorted by real part then imaginary part.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Smallest real part.
    pub mu_bar: f64,
    /// `max(beta, (1 + delta) / 2)`
    pub threshold_gamma_one: f64,
    /// `mu_bar > 0`
    pub stable_gamma_below_one: bool,
    /// `mu_bar > max(beta, (1 + delta) / 2)`
    pub stable_gamma_one: bool,
}

fn hessian<F: Fn(&[f64]) -> Result<Vec<f64>>>(grad: F, u: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = u.len();
    let mut h = vec![vec![0.0; n]; n];
    let mut x = u.to_vec();
    for j in 0..n {
        x[j] = u[j] + HESSIAN_STEP;
        let up = grad(&x)?;
        x[j] = u[j] - HESSIAN_STEP;
        let down = grad(&x)?;
        x[j] = u[j];
        for i in 0..n {
            h[i][j] = (up[i] - down[i]) / (2.0 * HESSIAN_STEP);
        }
    }
    // symmetrize the difference quotients
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (h[i][j] + h[j][i]);
            h[i][j] = s;
            h[j][i] = s;
        }
    }
    if h.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("second differences are not finite".into()));
    }
    Ok(h)
}

/// Jacobian of `Psi` at `(u, lambda)` restricted to `active`, with its
/// spectrum and the stability verdicts for the given rate tuning.
pub fn linearize(
    problem: &dyn ChanceProblem,
    u: &[f64],
    lambda: &[f64],
    active: &ActiveSet,
    tuning: &RateTuning,
) -> Result<LinearizationReport> {
    IterateState::new(u.to_vec(), lambda.to_vec()).check_dims(problem)?;
    let rows = problem.linear_constraints();
    let m = rows.len();
    let lp = lambda[m];
    let hj = hessian(|x| problem.mean_cost_grad(x), u)?;
    let hp = hessian(|x| problem.probability_gradient(x), u)?;
    let gp = problem.probability_gradient(u)?;

    let np = active.primal.len();
    let size = np + active.linear.len() + 1;
    let mut a = DMatrix::<f64>::zeros(size, size);
    for (r, &i) in active.primal.iter().enumerate() {
        for (c, &j) in active.primal.iter().enumerate() {
            a[(r, c)] = hj[i][j] - lp * hp[i][j];
        }
        for (c, &row) in active.linear.iter().enumerate() {
            a[(r, np + c)] = rows[row].coeffs[i];
            a[(np + c, r)] = -rows[row].coeffs[i];
        }
        a[(r, size - 1)] = -gp[i];
        a[(size - 1, r)] = gp[i];
    }

    let mut eigenvalues: Vec<(f64, f64)> = a.clone().complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    if eigenvalues.iter().any(|(re, im)| !re.is_finite() || !im.is_finite()) {
        return Err(Error::Numerical("eigenvalue computation failed".into()));
    }
    eigenvalues.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let mu_bar = eigenvalues.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let beta = exponent_to_f64(tuning.beta);
    let delta = exponent_to_f64(tuning.delta);
    let threshold = beta.max(0.5 * (1.0 + delta));

    let names = problem.primal_names();
    let mut variables: Vec<String> = active.primal.iter().map(|&i| names[i].clone()).collect();
    variables.extend(active.linear.iter().map(|i| format!("lambda_{i}")));
    variables.push("lambda_P".into());

    Ok(LinearizationReport {
        variables,
        matrix: (0..size).map(|r| (0..size).map(|c| a[(r, c)]).collect()).collect(),
        eigenvalues,
        mu_bar,
        threshold_gamma_one: threshold,
        stable_gamma_below_one: mu_bar > 0.0,
        stable_gamma_one: mu_bar > threshold,
    })
}

/// Log-log regression slope of `values` against `ks`.
pub fn loglog_slope(ks: &[f64], values: &[f64]) -> Result<f64> {
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Numerical("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    Ok(linear_fit(&lx, &ly)?.1)
}

pub const CLT_CHECKPOINTS: [usize; 3] = [1000, 2000, 5000];
pub const CLT_MIN_REPLICATIONS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltCheckpoint {
    pub k: usize,
    /// Mean of `k^{kappa/2} (x^k - x*)`.
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub skewness: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
    /// `k^kappa E|x^k - x*|^2`
    pub scaled_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltSummary {
    pub replications: usize,
    pub kappa: f64,
    pub checkpoints: Vec<CltCheckpoint>,
    /// Log-log slope of the MSE over `k` in `[500, 5000]`.
    pub mse_slope: f64,
}

fn state_at(t: &Trajectory, k: usize) -> Option<&IterateState> {
    t.records.binary_search_by_key(&k, |s| s.k).ok().map(|i| &t.records[i])
}

/// Mean over replications of `|x^k - x*|^2` at every recorded `k` in
/// `[k_lo, k_hi]` common to all trajectories.
pub fn mse_series(trajectories: &[Trajectory], x_sharp: &[f64], k_lo: usize, k_hi: usize) -> Vec<(usize, f64)> {
    let Some(first) = trajectories.first() else {
        return Vec::new();
    };
    first
        .records
        .iter()
        .map(|s| s.k)
        .filter(|&k| k >= k_lo && k <= k_hi)
        .filter_map(|k| {
            let errs: Option<Vec<f64>> = trajectories
                .iter()
                .map(|t| state_at(t, k).map(|s| sq_dist(&s.flat(), x_sharp)))
                .collect();
            errs.map(|e| (k, e.iter().sum::<f64>() / e.len() as f64))
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Empirical distribution of the rescaled errors at fixed checkpoints.
pub fn clt_diagnostics(trajectories: &[Trajectory], x_sharp: &[f64], kappa: f64) -> Result<CltSummary> {
    let m = trajectories.len();
    if m < CLT_MIN_REPLICATIONS {
        return Err(Error::param(
            "trajectories",
            format!("need at least {CLT_MIN_REPLICATIONS} replications, got {m}"),
        ));
    }
    let mut checkpoints = Vec::new();
    for k in CLT_CHECKPOINTS {
        let xs: Option<Vec<Vec<f64>>> = trajectories
            .iter()
            .map(|t| {
                state_at(t, k).map(|s| {
                    let scale = (k as f64).powf(0.5 * kappa);
                    s.flat().iter().zip(x_sharp).map(|(x, y)| scale * (x - y)).collect()
                })
            })
            .collect();
        let Some(xs) = xs else { continue };
        let d = x_sharp.len();
        let mf = m as f64;
        let mean: Vec<f64> = (0..d).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / mf).collect();
        let covariance: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| xs.iter().map(|x| (x[i] - mean[i]) * (x[j] - mean[j])).sum::<f64>() / mf)
                    .collect()
            })
            .collect();
        let moment = |j: usize, p: i32| xs.iter().map(|x| (x[j] - mean[j]).powi(p)).sum::<f64>() / mf;
        let skewness = (0..d)
            .map(|j| {
                let v = covariance[j][j];
                if v > 0.0 {
                    moment(j, 3) / v.powf(1.5)
                } else {
                    0.0
                }
            })
            .collect();
        let excess_kurtosis = (0..d)
            .map(|j| {
                let v = covariance[j][j];
                if v > 0.0 {
                    moment(j, 4) / (v * v) - 3.0
                } else {
                    0.0
                }
            })
            .collect();
        let scaled_mse = xs.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / mf;
        checkpoints.push(CltCheckpoint {
            k,
            mean,
            covariance,
            skewness,
            excess_kurtosis,
            scaled_mse,
        });
    }
    let series = mse_series(trajectories, x_sharp, 500, 5000);
    let ks: Vec<f64> = series.iter().map(|p| p.0 as f64).collect();
    let vs: Vec<f64> = series.iter().map(|p| p.1).collect();
    let mse_slope = loglog_slope(&ks, &vs)?;
    Ok(CltSummary {
        replications: m,
        kappa,
        checkpoints,
        mse_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::EstimatorKind;
    use crate::problem::{PortfolioProblem, ToyProblem};
    use crate::schedules::{optimal_tuning, Hypothesis};
    use approx::assert_abs_diff_eq;

    const OPT: [f64; 2] = [0.0, 0.50407];

    fn ac(r: f64) -> EstimatorConfig {
        EstimatorConfig::new(EstimatorKind::Ac, r).unwrap()
    }

    fn fd(c: f64) -> EstimatorConfig {
        EstimatorConfig::new(EstimatorKind::Fd, c).unwrap()
    }

    #[test]
    fn ac_moments_at_half_radius() {
        let p = PortfolioProblem::default();
        let rep = bias_variance_oracle(&p, &ac(0.5), &OPT, 1.0).unwrap();
        // expansion P'_u - 0.096 r^2 + 0.012 r^4 with the unrounded P'_u
        let pu = p.probability_gradient(&OPT).unwrap()[0];
        assert_abs_diff_eq!(rep.mean[0], pu - 0.096 * 0.25 + 0.012 * 0.0625, epsilon = 1e-4);
        // trapezoid reference on 2e6 panels; the three-term variance
        // expansion (0.485) is off by O(r^2) this far out
        assert_abs_diff_eq!(rep.mean[0], 0.597702, epsilon = 1e-5);
        assert_abs_diff_eq!(rep.variance[0], 0.512874, epsilon = 1e-5);
        let mqe = rep.variance.iter().sum::<f64>() + rep.bias.iter().map(|b| b * b).sum::<f64>();
        assert_abs_diff_eq!(rep.mqe, mqe, epsilon = 1e-15);
    }

    #[test]
    fn fd_moments_at_half_step() {
        let p = PortfolioProblem::default();
        let rep = bias_variance_oracle(&p, &fd(0.5), &OPT, 1.0).unwrap();
        // trapezoid reference; the expansion 0.31/c - 0.39 - 0.12c gives 0.17
        assert_abs_diff_eq!(rep.mean[0], 0.566877, epsilon = 1e-5);
        assert_abs_diff_eq!(rep.variance[0], 0.245527, epsilon = 1e-5);
        let rep = bias_variance_oracle(&p, &fd(0.1), &OPT, 1.0).unwrap();
        assert_abs_diff_eq!(rep.variance[0], 0.31 / 0.1 - 0.39 - 0.012, epsilon = 0.02);
    }

    #[test]
    fn small_smoothing_recovers_gradient() {
        let p = PortfolioProblem::default();
        let a = bias_variance_oracle(&p, &ac(1e-3), &OPT, 1.0).unwrap();
        assert_abs_diff_eq!(a.mean[0], 0.62, epsilon = 1e-3 + 1.1e-3);
        assert_abs_diff_eq!(a.mean[1], 1.18, epsilon = 1e-3 + 0.8e-3);
        let f = bias_variance_oracle(&p, &fd(1e-3), &OPT, 1.0).unwrap();
        assert_abs_diff_eq!(f.mean[0], 0.62, epsilon = 1e-2);
        assert_abs_diff_eq!(f.mean[1], 1.18, epsilon = 1e-2);
    }

    #[test]
    fn bias_is_second_order_and_variance_first_order() {
        let p = PortfolioProblem::default();
        let reps = bias_variance_sweep(&p, &ac(1.0), &OPT, &[0.4, 0.2, 0.1, 0.05], 1.0).unwrap();
        let c: Vec<f64> = reps[..3]
            .iter()
            .map(|r| r.bias[0].abs() / r.smoothing.powi(2))
            .collect();
        let (lo, hi) = c.iter().fold((f64::MAX, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
        assert!(hi / lo < 2.0, "{c:?}");
        let vr = |r: &BiasVarianceReport| r.variance[0] * r.smoothing;
        assert!((vr(&reps[3]) / vr(&reps[2]) - 1.0).abs() < 0.1);
        assert_abs_diff_eq!(vr(&reps[3]), 0.45, epsilon = 0.045);
    }

    #[test]
    fn oracle_rejects_boundary_and_exact() {
        let p = PortfolioProblem::default();
        assert!(matches!(
            bias_variance_oracle(&p, &ac(0.1), &[0.3, 0.0], 1.0),
            Err(Error::GradientUndefined(_))
        ));
        let ex = EstimatorConfig::new(EstimatorKind::Exact, 1.0).unwrap();
        assert!(bias_variance_oracle(&p, &ex, &OPT, 1.0).is_err());
    }

    #[test]
    fn sweep_csv_layout() {
        let p = PortfolioProblem::default();
        let reps = bias_variance_sweep(&p, &ac(1.0), &OPT, &[0.1, 0.2], 1.0).unwrap();
        let csv = sweep_csv(&reps);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "smoothing,mean_0,mean_1,var_0,var_1,bias_0,bias_1,mqe");
        assert_eq!(lines.len(), 3);
        let v: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
        assert_abs_diff_eq!(v, reps[0].mean[0], epsilon = 1e-8 * v.abs());
    }

    #[test]
    fn optimal_smoothing_formula() {
        let (r, mqe) = optimal_smoothing(4.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-15);
        // A r^-1 + B^2 r^4 at the optimum
        assert_abs_diff_eq!(mqe, 4.0 / r + r.powi(4), epsilon = 1e-12);
        assert!(optimal_smoothing(0.0, 1.0, 1.0).is_err());
        assert!(optimal_smoothing(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn mean_field_examples() {
        let toy = ToyProblem::new(0.7).unwrap();
        let (u, l) = toy.kt_point().unwrap();
        let f = mean_field(&toy, &[u], &[l]).unwrap();
        assert!(f.iter().all(|x| x.abs() < 1e-6), "{f:?}");
        let far = mean_field(&toy, &[1.0], &[1e6]).unwrap();
        assert!(far[0].abs() < 1e-100);
        let dual = mean_field(&toy, &[1.0], &[0.0]).unwrap()[1];
        assert!(dual > 0.0 && (dual - (0.7 - toy.probability(&[1.0]).unwrap())).abs() < 1e-15);

        let p = PortfolioProblem::default();
        let (u, l) = p.reference_solution().unwrap();
        let f = mean_field(&p, &u, &l).unwrap();
        // the bound on u absorbs its drift
        assert!(f[0] < 0.0);
        for x in &f[1..] {
            if x.abs() > 1e-6 {
                assert!(f[2] < 0.0 && (x - f[2]).abs() < 1e-15, "{f:?}");
            }
        }
    }

    #[test]
    fn ode_toy_paths() {
        let toy = ToyProblem::new(0.7).unwrap();
        let path = ode_integrate(&toy, &IterateState::new(vec![-2.5], vec![1.0]), 200.0, 0.01).unwrap();
        let end = path.last().unwrap();
        assert_abs_diff_eq!(end.u[0], -2.05244, epsilon = 1e-3);
        assert_abs_diff_eq!(end.lambda[0], 0.877913, epsilon = 1e-3);

        let stuck = ode_integrate(&toy, &IterateState::new(vec![1.0], vec![1.0]), 200.0, 0.01).unwrap();
        assert!(stuck.iter().all(|p| (p.u[0] - 1.0).abs() < 1e-6));
        assert!(stuck.last().unwrap().lambda[0] > 100.0);

        let zero = ode_integrate(&toy, &IterateState::new(vec![0.3], vec![2.0]), 0.0, 0.01).unwrap();
        assert_eq!(zero.len(), 1);
        assert_eq!((zero[0].u[0], zero[0].lambda[0]), (0.3, 2.0));
        assert!(ode_integrate(&toy, &IterateState::new(vec![0.3], vec![2.0]), 1.0, 0.0).is_err());
    }

    /// Characteristic polynomial coefficients by Faddeev-LeVerrier.
    fn char_poly(a: &[Vec<f64>]) -> Vec<f64> {
        let n = a.len();
        let am = DMatrix::from_fn(n, n, |i, j| a[i][j]);
        let mut coeffs = vec![1.0];
        let mut m = DMatrix::<f64>::zeros(n, n);
        for k in 1..=n {
            m = &am * &m + DMatrix::identity(n, n) * coeffs[k - 1];
            let c = -(&am * &m).trace() / k as f64;
            coeffs.push(c);
        }
        coeffs
    }

    fn poly_at(c: &[f64], re: f64, im: f64) -> f64 {
        let (mut pr, mut pi) = (0.0, 0.0);
        for &ck in c {
            let (nr, ni) = (pr * re - pi * im + ck, pr * im + pi * re);
            pr = nr;
            pi = ni;
        }
        (pr * pr + pi * pi).sqrt()
    }

    #[test]
    fn portfolio_linearization() {
        let p = PortfolioProblem::default();
        let (u, l) = p.reference_solution().unwrap();
        let tuning = optimal_tuning(EstimatorKind::Ac, Hypothesis::H3);

        let full = linearize(&p, &u, &l, &ActiveSet::full(&p, &u, 1e-9), &tuning).unwrap();
        assert_eq!(full.variables, vec!["u", "v", "lambda_P"]);
        let ev = &full.eigenvalues;
        assert_abs_diff_eq!(ev[0].0, 0.207, epsilon = 0.01);
        assert_abs_diff_eq!(ev[0].1, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ev[1].0, 0.974, epsilon = 0.01);
        assert_abs_diff_eq!(ev[1].1.abs(), 0.753, epsilon = 0.01);
        assert_abs_diff_eq!(ev[2].1, -ev[1].1, epsilon = 1e-9);
        assert!(full.stable_gamma_below_one);
        assert!(!full.stable_gamma_one);
        let cp = char_poly(&full.matrix);
        for &(re, im) in ev {
            assert!(poly_at(&cp, re, im) < 1e-8);
        }

        let red = linearize(&p, &u, &l, &ActiveSet::reduced(&p, &u, 1e-9), &tuning).unwrap();
        assert_eq!(red.variables, vec!["v", "lambda_P"]);
        assert_abs_diff_eq!(red.mu_bar, 0.605, epsilon = 0.01);
        assert_abs_diff_eq!(red.eigenvalues[1].1.abs(), 1.014, epsilon = 0.01);
        assert!(red.stable_gamma_one);
    }

    #[test]
    fn clt_requires_replications() {
        let t = Trajectory {
            seed: 0,
            records: vec![IterateState::new(vec![0.0], vec![0.0])],
            terminal: IterateState::new(vec![0.0], vec![0.0]),
        };
        assert!(clt_diagnostics(&vec![t; 29], &[0.0, 0.0], 0.8).is_err());
    }

    #[test]
    fn clt_identical_inputs_have_zero_covariance() {
        let records: Vec<IterateState> = (0..=5000)
            .map(|k| {
                let e = 1.0 / (k.max(1) as f64).sqrt();
                IterateState {
                    u: vec![e],
                    lambda: vec![e],
                    k,
                }
            })
            .collect();
        let t = Trajectory {
            seed: 0,
            terminal: records.last().unwrap().clone(),
            records,
        };
        let s = clt_diagnostics(&vec![t; 30], &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(s.checkpoints.len(), 3);
        for c in &s.checkpoints {
            assert!(c.covariance.iter().flatten().all(|&x| x.abs() < 1e-20));
            assert_abs_diff_eq!(c.scaled_mse, 2.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(s.mse_slope, -1.0, epsilon = 1e-9);
    }
}
