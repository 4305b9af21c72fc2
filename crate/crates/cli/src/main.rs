//! `ccsa`: command-line front end for the chance-constrained stochastic
//! Arrow-Hurwicz solver.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use ccsa_core::{EstimatorKind, Hypothesis};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "ccsa",
    version,
    about = "Stochastic primal-dual solver for chance-constrained problems"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Random seed (base seed for `experiment`)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config file: a run config, or an experiment config for `experiment`
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Problem instance: portfolio or toy
    #[arg(long, global = true, value_name = "NAME")]
    pub problem: Option<String>,
    /// Probability level pi
    #[arg(long, global = true)]
    pub pi: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single run of the stochastic iteration
    Solve {
        #[arg(long, value_parser = parse_estimator)]
        estimator: Option<EstimatorKind>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Replicated comparison of estimators with common random numbers
    Experiment {
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Worker threads
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Optimal exponents, predicted rate and schedule constants
    Tune {
        #[arg(long, value_parser = parse_estimator, default_value = "ac")]
        estimator: EstimatorKind,
        #[arg(long, default_value = "h3")]
        hypothesis: Hypothesis,
        /// Check this step exponent instead of the optimal one
        #[arg(long)]
        gamma: Option<f64>,
        /// Check this smoothing exponent instead of the optimal one
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Quadrature bias and variance of a gradient estimator over a smoothing grid
    BiasVariance {
        #[arg(long, value_parser = parse_estimator, default_value = "ac")]
        estimator: EstimatorKind,
        /// Primal point (defaults to the reference optimum)
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        point: Option<Point>,
        /// Smoothing values
        #[arg(long, value_parser = parse_vector)]
        grid: Option<Point>,
        /// Sample count N in the MQE
        #[arg(long, default_value_t = 1.0)]
        samples: f64,
        /// Print fitted MQE constants and the optimal scale instead of the sweep
        #[arg(long)]
        fit: bool,
    },
    /// KT residual at a point given as u..., lambda...
    KtCheck {
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        point: Point,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
    },
    /// Mean-field vector field on a grid, or ODE paths with --horizon
    Field {
        /// State u..., lambda... (repeatable); replaces the grid
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        point: Vec<Point>,
        /// Grid of the primal variable, lo:hi:n (one-dimensional problems)
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true, default_value = "-3:1.5:10")]
        u_range: (f64, f64, usize),
        /// Grid of the probability multiplier, lo:hi:n
        #[arg(long, value_parser = parse_range, default_value = "0:5:6")]
        lambda_range: (f64, f64, usize),
        /// Integrate the ODE up to this time from each point
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        /// Print every n-th ODE step
        #[arg(long, default_value_t = 100)]
        every: usize,
    },
    /// Mollifier catalog with its moments
    Kernels,
}

fn parse_estimator(s: &str) -> Result<EstimatorKind, String> {
    EstimatorKind::by_name(s).map_err(|e| e.to_string())
}

/// Comma-separated list of numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<f64>);

fn parse_vector(s: &str) -> Result<Point, String> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
        .collect::<Result<Vec<f64>, String>>()
        .map(Point)
}

fn parse_range(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err(format!("expected lo:hi:n, got `{s}`"));
    };
    let lo: f64 = lo.parse().map_err(|e| format!("`{lo}`: {e}"))?;
    let hi: f64 = hi.parse().map_err(|e| format!("`{hi}`: {e}"))?;
    let n: usize = n.parse().map_err(|e| format!("`{n}`: {e}"))?;
    if n == 0 || !(lo <= hi) {
        return Err(format!("empty range `{s}`"));
    }
    Ok((lo, hi, n))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                ccsa_core::Error::Divergence { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_and_ranges() {
        assert_eq!(parse_vector("-2.5, 1").unwrap(), Point(vec![-2.5, 1.0]));
        assert!(parse_vector("1,x").is_err());
        assert_eq!(parse_range("-3:1.5:10").unwrap(), (-3.0, 1.5, 10));
        assert!(parse_range("1:0:3").is_err());
        assert!(parse_range("0:1:0").is_err());
        assert!(parse_range("0:1").is_err());
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli =
            Cli::try_parse_from(["ccsa", "kt-check", "--point", "-1,2", "--problem", "toy", "--seed", "3"]).unwrap();
        assert_eq!(cli.global.problem.as_deref(), Some("toy"));
        assert_eq!(cli.global.seed, Some(3));
        assert!(matches!(cli.command, Command::KtCheck { ref point, .. } if point.0 == [-1.0, 2.0]));
    }
}
