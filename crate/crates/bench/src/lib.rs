//! Shared fixtures for the criterion benchmarks in `benches/`.

use ccsa_core::problem::PortfolioProblem;
use ccsa_core::IterateState;

/// Rounded optimum of the default portfolio instance.
pub const PORTFOLIO_OPTIMUM: [f64; 2] = [0.0, 0.50407];

pub fn portfolio() -> PortfolioProblem {
    PortfolioProblem::default()
}

/// Default starting state of the portfolio runs.
pub fn start_state() -> IterateState {
    IterateState::new(vec![0.2, 0.8], vec![0.5, 0.3])
}
