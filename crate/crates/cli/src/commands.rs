use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ccsa_core::analysis::{
    bias_variance_sweep, fit_mqe_constants, mean_field, ode_integrate, optimal_smoothing, sweep_csv,
};
use ccsa_core::harness::{coordinate_names, reference_point, run_experiment, ExperimentConfig};
use ccsa_core::kernels::{builtin_kernels, kernel_score};
use ccsa_core::schedules::{check_conditions, exponent_from_f64, optimal_tuning, predict_rate};
use ccsa_core::solver::{kt_residual, run_problem};
use ccsa_core::{ChanceProblem, Error, EstimatorConfig, EstimatorKind, IterateState, ProblemSpec, Result, RunConfig};

use crate::{Cli, Command, GlobalOpts, Point};

const AC_GRID: [f64; 5] = [0.02, 0.04, 0.06, 0.08, 0.1];
const FD_GRID: [f64; 5] = [0.01, 0.015, 0.02, 0.025, 0.03];

pub fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Solve { estimator, iterations } => solve(g, *estimator, *iterations),
        Command::Experiment {
            replications,
            iterations,
            workers,
        } => experiment(g, *replications, *iterations, *workers),
        Command::Tune {
            estimator,
            hypothesis,
            gamma,
            beta,
        } => {
            let mut cfg = run_config(g)?;
            cfg.estimator = *estimator;
            cfg.hypothesis = *hypothesis;
            tune(&cfg, *gamma, *beta)
        }
        Command::BiasVariance {
            estimator,
            point,
            grid,
            samples,
            fit,
        } => bias_variance(
            g,
            *estimator,
            point.as_ref().map(|p| p.0.as_slice()),
            grid.as_ref().map(|p| p.0.as_slice()),
            *samples,
            *fit,
        ),
        Command::KtCheck { point, eps, rho } => kt_check(g, &point.0, *eps, *rho),
        Command::Field {
            point,
            u_range,
            lambda_range,
            horizon,
            dt,
            every,
        } => field(g, point, *u_range, *lambda_range, *horizon, *dt, *every),
        Command::Kernels => {
            print!("{}", kernel_table());
            Ok(())
        }
    }
}

fn read_config(g: &GlobalOpts) -> Result<Option<String>> {
    g.config
        .as_ref()
        .map(fs::read_to_string)
        .transpose()
        .map_err(Error::from)
}

fn problem_spec(g: &GlobalOpts, base: ProblemSpec) -> Result<ProblemSpec> {
    let mut spec = match &g.problem {
        Some(name) => ProblemSpec::by_name(name)?,
        None => base,
    };
    if let Some(pi) = g.pi {
        spec = spec.with_prob_level(pi);
    }
    Ok(spec)
}

fn run_config(g: &GlobalOpts) -> Result<RunConfig> {
    let mut cfg = match read_config(g)? {
        Some(text) => RunConfig::from_json(&text)?,
        None => RunConfig::default(),
    };
    cfg.problem = problem_spec(g, cfg.problem)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn build_problem(g: &GlobalOpts) -> Result<Box<dyn ChanceProblem>> {
    run_config(g)?.problem.build()
}

fn write_out(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.8e}")).collect::<Vec<_>>().join(",")
}

fn solve(g: &GlobalOpts, estimator: Option<EstimatorKind>, iterations: Option<usize>) -> Result<()> {
    let mut cfg = run_config(g)?;
    if let Some(kind) = estimator {
        cfg.estimator = kind;
    }
    if let Some(n) = iterations {
        cfg.iterations = n;
    }
    let problem = cfg.problem.build()?;
    let traj = run_problem(problem.as_ref(), &cfg)?;
    let x_sharp = reference_point(problem.as_ref()).ok();
    let error = x_sharp.as_ref().map(|x| {
        let t = traj.terminal.flat();
        t.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    });
    let summary = serde_json::json!({
        "problem": problem.name(),
        "estimator": cfg.estimator,
        "seed": cfg.seed,
        "iterations": cfg.iterations,
        "terminal": traj.terminal,
        "reference": x_sharp,
        "distance_to_reference": error,
    });
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    print!("{text}");
    if let Some(dir) = &g.out {
        let mut csv = format!("k,{}\n", coordinate_names(problem.as_ref()).join(","));
        for s in &traj.records {
            writeln!(csv, "{},{}", s.k, join(&s.flat())).unwrap();
        }
        write_out(dir, "trajectory.csv", &csv)?;
        write_out(dir, "summary.json", &text)?;
    }
    Ok(())
}

fn experiment(
    g: &GlobalOpts,
    replications: Option<usize>,
    iterations: Option<usize>,
    workers: Option<usize>,
) -> Result<()> {
    let mut cfg = match read_config(g)? {
        Some(text) => ExperimentConfig::from_json(&text)?,
        None => ExperimentConfig::default(),
    };
    cfg.run.problem = problem_spec(g, cfg.run.problem)?;
    if let Some(seed) = g.seed {
        cfg.base_seed = seed;
        cfg.seeds = None;
    }
    if let Some(m) = replications {
        cfg.replications = m;
        cfg.seeds = cfg.seeds.filter(|s| s.len() == m);
    }
    if let Some(k) = iterations {
        cfg.run.iterations = k;
    }
    if workers.is_some() {
        cfg.workers = workers;
    }
    if g.out.is_some() {
        cfg.out_dir = g.out.clone();
    }
    let report = run_experiment(&cfg)?;
    let names = report
        .variants
        .first()
        .map(|v| v.series.coordinates.clone())
        .unwrap_or_default();
    println!("reference {}", fmt_named(&names, &report.x_sharp));
    for v in &report.variants {
        let s = &v.series;
        println!(
            "{}: {} replications, {} diverged, terminal MSE {:.4e}",
            v.label,
            s.replications,
            v.diverged.len(),
            s.mse.last().copied().unwrap_or(f64::NAN)
        );
        if let (Some(m), Some(sd)) = (s.mean.last(), s.std.last()) {
            println!("  mean error {}", fmt_named(&names, m));
            println!("  std error  {}", fmt_named(&names, sd));
        }
    }
    Ok(())
}

fn fmt_named(names: &[String], xs: &[f64]) -> String {
    names
        .iter()
        .zip(xs)
        .map(|(n, x)| format!("{n}={x:+.5}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn tune(cfg: &RunConfig, gamma: Option<f64>, beta: Option<f64>) -> Result<()> {
    let kind = cfg.estimator;
    let hyp = cfg.hypothesis;
    let optimal = optimal_tuning(kind, hyp);
    let gamma = gamma.map(exponent_from_f64).transpose()?.unwrap_or(optimal.gamma);
    let beta = beta.map(exponent_from_f64).transpose()?.unwrap_or(optimal.beta);
    let report = check_conditions(kind, hyp, gamma, beta);
    println!("estimator={} hypothesis={hyp}", kind.name());
    println!("conditions: {report}");
    let t = predict_rate(gamma, beta, kind, hyp)?;
    let show = |name: &str, x: ccsa_core::schedules::Exponent| {
        let v = *x.numer() as f64 / *x.denom() as f64;
        println!("{name}={} ({x})", fmt_short(v));
    };
    show("beta", t.beta);
    show("gamma", t.gamma);
    show("delta", t.delta);
    show("kappa", t.kappa);
    let (scale_name, scale) = match kind {
        EstimatorKind::Fd => ("b", cfg.b),
        _ => ("a", cfg.a),
    };
    println!("{scale_name}={scale} d={} e={} f={} g={}", cfg.d, cfg.e, cfg.f, cfg.g);
    Ok(())
}

/// Shortest decimal that round-trips at 6 significant digits.
fn fmt_short(x: f64) -> String {
    let s = format!("{:.6}", x);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn bias_variance(
    g: &GlobalOpts,
    kind: EstimatorKind,
    point: Option<&[f64]>,
    grid: Option<&[f64]>,
    samples: f64,
    fit: bool,
) -> Result<()> {
    let cfg = run_config(g)?;
    let problem = cfg.problem.build()?;
    let u = match point {
        Some(p) => p.to_vec(),
        None => problem.reference_solution()?.0,
    };
    let grid = match (grid, kind) {
        (Some(gr), _) => gr.to_vec(),
        (None, EstimatorKind::Fd) => FD_GRID.to_vec(),
        (None, _) => AC_GRID.to_vec(),
    };
    let est = EstimatorConfig {
        kernel: cfg.kernel,
        ..EstimatorConfig::new(kind, grid[0])?
    };
    if fit {
        let c = fit_mqe_constants(problem.as_ref(), &est, &u, &grid)?;
        let (s, mqe) = optimal_smoothing(c.a, c.b, samples)?;
        let text = format!(
            "A={:.6}\nB={:.6}\noptimal_smoothing={:.6}\nmqe={:.6}\n",
            c.a, c.b, s, mqe
        );
        print!("{text}");
        if let Some(dir) = &g.out {
            write_out(dir, "mqe.txt", &text)?;
        }
        return Ok(());
    }
    let reports = bias_variance_sweep(problem.as_ref(), &est, &u, &grid, samples)?;
    let csv = sweep_csv(&reports);
    print!("{csv}");
    if let Some(dir) = &g.out {
        write_out(dir, "bias_variance.csv", &csv)?;
    }
    Ok(())
}

fn split_point(problem: &dyn ChanceProblem, point: &[f64]) -> Result<IterateState> {
    let n = problem.dim();
    let want = n + problem.dual_dim();
    if point.len() != want {
        return Err(Error::DimensionMismatch {
            expected: want,
            got: point.len(),
        });
    }
    Ok(IterateState::new(point[..n].to_vec(), point[n..].to_vec()))
}

fn kt_check(g: &GlobalOpts, point: &[f64], eps: f64, rho: f64) -> Result<()> {
    let problem = build_problem(g)?;
    let s = split_point(problem.as_ref(), point)?;
    let r = kt_residual(problem.as_ref(), &s.u, &s.lambda, eps, rho)?;
    println!("residual={r:.6e}");
    Ok(())
}

fn field(
    g: &GlobalOpts,
    points: &[Point],
    u_range: (f64, f64, usize),
    l_range: (f64, f64, usize),
    horizon: Option<f64>,
    dt: f64,
    every: usize,
) -> Result<()> {
    let problem = build_problem(g)?;
    let p = problem.as_ref();
    let names = coordinate_names(p);
    let mut states = points
        .iter()
        .map(|x| split_point(p, &x.0))
        .collect::<Result<Vec<_>>>()?;
    if states.is_empty() {
        if horizon.is_some() || p.dim() != 1 || p.dual_dim() != 1 {
            let (u, l) = p.default_start();
            states.push(IterateState::new(u, l));
        } else {
            for u in linspace(u_range) {
                for l in linspace(l_range) {
                    states.push(IterateState::new(vec![u], vec![l]));
                }
            }
        }
    }
    let mut out = String::new();
    match horizon {
        Some(t) => {
            if every == 0 {
                return Err(Error::Config("--every must be positive".into()));
            }
            writeln!(out, "path,t,{}", names.join(",")).unwrap();
            for (i, s) in states.iter().enumerate() {
                let path = ode_integrate(p, s, t, dt)?;
                let last = path.len() - 1;
                for (j, pt) in path.iter().enumerate() {
                    if j % every == 0 || j == last {
                        let x: Vec<f64> = pt.u.iter().chain(&pt.lambda).copied().collect();
                        writeln!(out, "{i},{},{}", fmt_short(pt.t), join(&x)).unwrap();
                    }
                }
            }
        }
        None => {
            let drift: Vec<String> = names.iter().map(|n| format!("d{n}")).collect();
            writeln!(out, "{},{}", names.join(","), drift.join(",")).unwrap();
            for s in &states {
                let f = mean_field(p, &s.u, &s.lambda)?;
                writeln!(out, "{},{}", join(&s.flat()), join(&f)).unwrap();
            }
        }
    }
    print!("{out}");
    if let Some(dir) = &g.out {
        write_out(dir, "field.csv", &out)?;
    }
    Ok(())
}

fn linspace((lo, hi, n): (f64, f64, usize)) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn kernel_table() -> String {
    let mut out = format!(
        "{:<12}{:>10}{:>10}{:>10}{:>10}\n",
        "kernel", "h(0)", "sigma2", "l2norm2", "score"
    );
    for k in builtin_kernels() {
        writeln!(
            out,
            "{:<12}{:>10.4}{:>10.4}{:>10.4}{:>10.4}",
            k.name(),
            k.evaluate(0.0),
            k.sigma2,
            k.l2norm2,
            kernel_score(&k)
        )
        .unwrap();
    }
    out
}
