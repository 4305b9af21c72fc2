//! Step-size and smoothing schedules, convergence conditions and predicted
//! mean-square rates.
//!
//! With `eps^k ~ k^-gamma` and smoothing `~ k^-(beta/2)`, the estimator bias
//! decays like `k^-beta` and its variance grows like `k^-delta`; `delta`
//! depends on the estimator and, for FD, on the regularity hypothesis.
//! Exponent arithmetic is exact over the rationals.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;

pub type Exponent = Ratio<i64>;

fn r(n: i64, d: i64) -> Exponent {
    Ratio::new(n, d)
}

/// Nearest rational with denominator at most 1000, if it lies within 1e-9.
pub fn exponent_from_f64(x: f64) -> Result<Exponent> {
    if x.is_finite() {
        for d in 1..=1000i64 {
            let n = (x * d as f64).round();
            if (x - n / d as f64).abs() < 1e-9 {
                return Ok(r(n as i64, d));
            }
        }
    }
    Err(Error::Numerical(format!("{x} is not a small rational exponent")))
}

pub fn exponent_to_f64(x: Exponent) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Regularity level of the finite-difference variance bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Hypothesis {
    /// `theta'_xi` bounded away from zero: variance `O(1/c)`.
    #[default]
    H3,
    /// Weaker regularity: variance `O(c^{-3/2})`.
    H4,
    /// No hypothesis: variance `O(c^{-2})`.
    #[serde(rename = "none")]
    None,
}

impl FromStr for Hypothesis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "H3" | "h3" => Ok(Hypothesis::H3),
            "H4" | "h4" => Ok(Hypothesis::H4),
            "none" | "None" => Ok(Hypothesis::None),
            _ => Err(Error::Config(format!(
                "unknown hypothesis `{s}` (expected H3, H4 or none)"
            ))),
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hypothesis::H3 => "H3",
            Hypothesis::H4 => "H4",
            Hypothesis::None => "none",
        })
    }
}

/// Outcome of a condition check; empty `violations` means pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionReport {
    pub violations: Vec<String>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            f.write_str("pass")
        } else {
            f.write_str(&self.violations.join("; "))
        }
    }
}

/// Variance exponent `delta` (so `V^k = O(k^-delta)`, `delta <= 0`).
pub fn variance_exponent(kind: EstimatorKind, hypothesis: Hypothesis, beta: Exponent) -> Exponent {
    let m = match (kind, hypothesis) {
        (EstimatorKind::Exact, _) => r(0, 1),
        (EstimatorKind::Ac, _) | (EstimatorKind::Fd, Hypothesis::H3) => r(1, 2),
        (EstimatorKind::Fd, Hypothesis::H4) => r(3, 4),
        (EstimatorKind::Fd, Hypothesis::None) => r(1, 1),
    };
    -m * beta
}

fn check(gamma: Exponent, beta: Exponent, delta: Exponent) -> ConditionReport {
    let one = r(1, 1);
    let mut violations = Vec::new();
    if gamma <= r(0, 1) {
        violations.push(format!("gamma = {gamma} <= 0"));
    }
    if beta <= r(0, 1) {
        violations.push(format!("beta = {beta} <= 0"));
    }
    if gamma > one {
        violations.push(format!("gamma = {gamma} > 1"));
    }
    if beta + gamma <= one {
        violations.push(format!("beta + gamma = {} <= 1", beta + gamma));
    }
    let third = r(2, 1) * gamma + delta;
    if third <= one {
        violations.push(format!("2 gamma + delta = {third} <= 1"));
    }
    ConditionReport { violations }
}

/// `gamma <= 1`, `beta + gamma > 1`, `2 gamma - beta/2 > 1`.
pub fn check_conditions_ac(gamma: Exponent, beta: Exponent) -> ConditionReport {
    check(gamma, beta, variance_exponent(EstimatorKind::Ac, Hypothesis::H3, beta))
}

/// As for AC, with the third inequality matched to the hypothesis.
pub fn check_conditions_fd(gamma: Exponent, beta: Exponent, hypothesis: Hypothesis) -> ConditionReport {
    check(gamma, beta, variance_exponent(EstimatorKind::Fd, hypothesis, beta))
}

pub fn check_conditions(
    kind: EstimatorKind,
    hypothesis: Hypothesis,
    gamma: Exponent,
    beta: Exponent,
) -> ConditionReport {
    check(gamma, beta, variance_exponent(kind, hypothesis, beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateTuning {
    pub gamma: Exponent,
    pub beta: Exponent,
    pub delta: Exponent,
    /// `E|x^k - x*|^2 = O(k^-kappa)`
    pub kappa: Exponent,
}

impl fmt::Display for RateTuning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gamma={} beta={} delta={} kappa={}",
            self.gamma, self.beta, self.delta, self.kappa
        )
    }
}

/// `kappa = min(2 beta, gamma + delta)`; errors when the conditions fail.
pub fn predict_rate(
    gamma: Exponent,
    beta: Exponent,
    kind: EstimatorKind,
    hypothesis: Hypothesis,
) -> Result<RateTuning> {
    let report = check_conditions(kind, hypothesis, gamma, beta);
    if !report.passed() {
        return Err(Error::ConditionsViolated(report.to_string()));
    }
    let delta = variance_exponent(kind, hypothesis, beta);
    let kappa = (r(2, 1) * beta).min(gamma + delta);
    Ok(RateTuning {
        gamma,
        beta,
        delta,
        kappa,
    })
}

/// `gamma = 1` and `beta` balancing `2 beta = 1 + delta(beta)`.
pub fn optimal_tuning(kind: EstimatorKind, hypothesis: Hypothesis) -> RateTuning {
    let gamma = r(1, 1);
    // delta = -m beta, so 2 beta = 1 - m beta
    let m = -variance_exponent(kind, hypothesis, r(1, 1));
    let beta = r(1, 1) / (r(2, 1) + m);
    predict_rate(gamma, beta, kind, hypothesis).expect("balanced tuning satisfies the conditions")
}

/// `eps^k = d / (e + k)^gamma`. The same shape with `(f, g)` gives `rho^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub d: f64,
    pub e: f64,
    #[serde(default = "one")]
    pub gamma: f64,
}

fn one() -> f64 {
    1.0
}

impl StepSchedule {
    pub fn new(d: f64, e: f64) -> Result<Self> {
        Self::with_exponent(d, e, 1.0)
    }

    pub fn with_exponent(d: f64, e: f64, gamma: f64) -> Result<Self> {
        let s = StepSchedule { d, e, gamma };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(Error::param("d", format!("must be positive, got {}", self.d)));
        }
        if !(self.e.is_finite() && self.e >= 0.0) {
            return Err(Error::param("e", format!("must be nonnegative, got {}", self.e)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::param("gamma", format!("must lie in (0, 1], got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn at(&self, k: usize) -> f64 {
        let base = self.e + k as f64;
        if self.gamma == 1.0 {
            self.d / base
        } else {
            self.d / base.powf(self.gamma)
        }
    }
}

/// `r^k = scale * k^-exponent` (or `c^k` for FD).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingSchedule {
    pub scale: f64,
    #[serde(default = "default_smoothing_exponent")]
    pub exponent: f64,
}

fn default_smoothing_exponent() -> f64 {
    0.2
}

impl SmoothingSchedule {
    pub fn new(scale: f64, exponent: f64) -> Result<Self> {
        let s = SmoothingSchedule { scale, exponent };
        s.validate()?;
        Ok(s)
    }

    /// Exponent `beta / 2`.
    pub fn for_beta(scale: f64, beta: f64) -> Result<Self> {
        Self::new(scale, beta / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::param("scale", format!("must be positive, got {}", self.scale)));
        }
        if !(self.exponent.is_finite() && self.exponent > 0.0) {
            return Err(Error::param(
                "exponent",
                format!("must be positive, got {}", self.exponent),
            ));
        }
        Ok(())
    }

    pub fn at(&self, k: usize) -> f64 {
        self.scale * (k as f64).powf(-self.exponent)
    }
}

/// Primal step, dual step and smoothing schedules of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedules {
    pub step: StepSchedule,
    pub dual_step: StepSchedule,
    pub smoothing: SmoothingSchedule,
}

impl Schedules {
    pub fn validate(&self) -> Result<()> {
        self.step.validate()?;
        self.dual_step.validate()?;
        self.smoothing.validate()
    }

    /// `(gamma, beta)` implied by the step exponent and smoothing exponent.
    pub fn exponents(&self) -> Result<(Exponent, Exponent)> {
        Ok((
            exponent_from_f64(self.step.gamma)?,
            exponent_from_f64(2.0 * self.smoothing.exponent)?,
        ))
    }
}

/// `(eps^k, rho^k, r^k)` for `k >= 1`.
pub fn evaluate_schedules(s: &Schedules, k: usize) -> Result<(f64, f64, f64)> {
    if k < 1 {
        return Err(Error::param("k", "schedules are indexed from k = 1"));
    }
    Ok((s.step.at(k), s.dual_step.at(k), s.smoothing.at(k)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn one() -> Exponent {
        r(1, 1)
    }

    #[test]
    fn ac_condition_examples() {
        assert!(check_conditions_ac(one(), r(2, 5)).passed());
        let rep = check_conditions_ac(r(1, 2), r(2, 5));
        assert!(rep.violations.contains(&"beta + gamma = 9/10 <= 1".to_string()));
        assert!(!rep.passed());
        let rep = check_conditions_ac(one(), r(5, 2));
        assert_eq!(rep.violations, vec!["2 gamma + delta = 3/4 <= 1".to_string()]);
    }

    #[test]
    fn fd_condition_examples() {
        assert!(check_conditions_fd(one(), r(4, 11), Hypothesis::H4).passed());
        assert!(check_conditions_fd(one(), r(1, 3), Hypothesis::None).passed());
        let rep = check_conditions_fd(one(), r(11, 10), Hypothesis::None);
        assert_eq!(rep.violations, vec!["2 gamma + delta = 9/10 <= 1".to_string()]);
        assert!("H5".parse::<Hypothesis>().is_err());
        assert_eq!("none".parse::<Hypothesis>().unwrap(), Hypothesis::None);
    }

    #[test]
    fn boundary_is_strict() {
        // beta + gamma = 1 exactly
        assert!(!check_conditions_ac(r(3, 5), r(2, 5)).passed());
        // 2 gamma - beta/2 = 1 exactly
        assert!(!check_conditions_ac(one(), r(2, 1)).passed());
        assert!(!check_conditions_ac(r(11, 10), r(2, 5)).passed());
    }

    #[test]
    fn rate_examples() {
        let ac = predict_rate(one(), r(2, 5), EstimatorKind::Ac, Hypothesis::H3).unwrap();
        assert_eq!(ac.kappa, r(4, 5));
        let h4 = predict_rate(one(), r(4, 11), EstimatorKind::Fd, Hypothesis::H4).unwrap();
        assert_eq!(h4.kappa, r(8, 11));
        let low = predict_rate(one(), r(1, 5), EstimatorKind::Ac, Hypothesis::H3).unwrap();
        assert_eq!(low.kappa, r(2, 5));
        assert!(matches!(
            predict_rate(r(1, 2), r(2, 5), EstimatorKind::Ac, Hypothesis::H3),
            Err(Error::ConditionsViolated(_))
        ));
    }

    #[test]
    fn optimal_tunings() {
        let cases = [
            (EstimatorKind::Ac, Hypothesis::H3, r(2, 5), r(4, 5)),
            (EstimatorKind::Fd, Hypothesis::H3, r(2, 5), r(4, 5)),
            (EstimatorKind::Fd, Hypothesis::H4, r(4, 11), r(8, 11)),
            (EstimatorKind::Fd, Hypothesis::None, r(1, 3), r(2, 3)),
        ];
        for (kind, hyp, beta, kappa) in cases {
            let t = optimal_tuning(kind, hyp);
            assert_eq!((t.gamma, t.beta, t.kappa), (one(), beta, kappa));
            assert_eq!(r(2, 1) * t.beta, t.gamma + t.delta);
            assert!(check_conditions(kind, hyp, t.gamma, t.beta).passed());
            for db in [r(1, 20), r(-1, 20)] {
                let k = predict_rate(t.gamma, t.beta + db, kind, hyp).unwrap().kappa;
                assert!(k < t.kappa, "{kind:?} {hyp}: {k} !< {}", t.kappa);
            }
        }
    }

    #[test]
    fn schedule_examples() {
        let s = Schedules {
            step: StepSchedule::new(1.0, 0.0).unwrap(),
            dual_step: StepSchedule::new(2.0, 0.0).unwrap(),
            smoothing: SmoothingSchedule::for_beta(1.30, 0.4).unwrap(),
        };
        let (eps, rho, rk) = evaluate_schedules(&s, 10).unwrap();
        assert_abs_diff_eq!(eps, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(rho, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(rk, 1.30 * 10f64.powf(-0.2), epsilon = 1e-15);
        assert_abs_diff_eq!(evaluate_schedules(&s, 1).unwrap().2, 1.30, epsilon = 1e-15);
        let c = SmoothingSchedule::new(0.63, 0.2).unwrap();
        assert_abs_diff_eq!(c.at(32), 0.315, epsilon = 1e-12);
        assert!(evaluate_schedules(&s, 0).is_err());
        assert_eq!(s.exponents().unwrap(), (one(), r(2, 5)));
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(StepSchedule::new(0.0, 1.0).is_err());
        assert!(StepSchedule::new(1.0, -1.0).is_err());
        assert!(StepSchedule::with_exponent(1.0, 1.0, 1.5).is_err());
        assert!(SmoothingSchedule::new(-1.0, 0.2).is_err());
        assert!(serde_json::from_str::<StepSchedule>(r#"{"d":1,"e":2,"gama":1}"#).is_err());
    }

    #[test]
    fn harmonic_steps_diverge_and_squares_converge() {
        let s = StepSchedule::new(0.5, 3.0).unwrap();
        let mut sum = 0.0;
        let mut checkpoints = Vec::new();
        for k in 1..=1_000_000 {
            sum += s.at(k);
            if k % 100_000 == 0 {
                checkpoints.push(sum);
            }
        }
        // grows like 0.5 ln k
        assert!(checkpoints.windows(2).all(|w| w[1] > w[0]));
        assert!(sum > 0.5 * (1e6f64 / 4.0).ln());
        // tail beyond n is about d^2 / n
        let t = StepSchedule::new(0.3, 3.0).unwrap();
        let sq = |n: usize| (1..=n).map(|k| t.at(k).powi(2)).sum::<f64>();
        assert!(sq(1_000_000) - sq(100_000) < 1e-6);
    }

    #[test]
    fn exponent_parsing() {
        assert_eq!(exponent_from_f64(0.4).unwrap(), r(2, 5));
        assert_eq!(exponent_from_f64(4.0 / 11.0).unwrap(), r(4, 11));
        assert_eq!(exponent_from_f64(2.0 * 0.2).unwrap(), r(2, 5));
        assert!(exponent_from_f64(std::f64::consts::PI).is_err());
    }

    proptest! {
        #[test]
        fn enlarging_gamma_keeps_pass(gn in 1i64..=20, bn in 1i64..=40, step in 1i64..=20) {
            let gamma = r(gn, 20);
            let beta = r(bn, 20);
            let larger = (gamma + r(step, 20)).min(r(1, 1));
            for hyp in [Hypothesis::H3, Hypothesis::H4, Hypothesis::None] {
                if check_conditions_fd(gamma, beta, hyp).passed() {
                    prop_assert!(check_conditions_fd(larger, beta, hyp).passed());
                }
            }
            if check_conditions_ac(gamma, beta).passed() {
                prop_assert!(check_conditions_ac(larger, beta).passed());
            }
        }
    }
}
