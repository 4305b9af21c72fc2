//! Replicated experiments with common random numbers.
//!
//! Every variant runs the same list of seeds, so the AC and FD runs of one
//! replication see the same noise sequence. Replications run in parallel;
//! aggregation walks them in seed order so the result does not depend on
//! scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::problem::ChanceProblem;
use crate::solver::{self, IterateState, RunConfig, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Template; its `estimator` and `seed` are overridden per variant and
    /// replication.
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Explicit seeds (length must equal `replications`); otherwise
    /// `base_seed, base_seed + 1, ...`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub emit_plots: bool,
    /// Worker threads; all available cores when unset.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_replications() -> usize {
    100
}
fn default_variants() -> Vec<Variant> {
    vec![Variant::new(EstimatorKind::Ac), Variant::new(EstimatorKind::Fd)]
}

/// One compared algorithm: an estimator plus optional per-variant step
/// constants and dual estimate, overriding the run template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub estimator: EstimatorKind,
    /// Output label; defaults to the estimator name.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub d: Option<f64>,
    #[serde(default)]
    pub e: Option<f64>,
    #[serde(default)]
    pub f: Option<f64>,
    #[serde(default)]
    pub g: Option<f64>,
    #[serde(default)]
    pub dual_estimate_mode: Option<crate::estimators::DualEstimateMode>,
}

impl Variant {
    pub fn new(estimator: EstimatorKind) -> Self {
        Variant {
            estimator,
            label: None,
            d: None,
            e: None,
            f: None,
            g: None,
            dual_estimate_mode: None,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.estimator.name().to_string())
    }
}
fn default_true() -> bool {
    true
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::param("replications", "must be at least 1"));
        }
        if let Some(seeds) = &self.seeds {
            if seeds.len() != self.replications {
                return Err(Error::param(
                    "seeds",
                    format!("{} seeds for {} replications", seeds.len(), self.replications),
                ));
            }
        }
        if self.variants.is_empty() {
            return Err(Error::param("variants", "at least one estimator is required"));
        }
        let mut labels: Vec<String> = self.variants.iter().map(Variant::label).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.variants.len() {
            return Err(Error::param("variants", "labels must be distinct"));
        }
        for v in &self.variants {
            self.variant_config(v).validate()?;
        }
        if self.workers == Some(0) {
            return Err(Error::param("workers", "must be at least 1"));
        }
        self.run.validate()
    }

    /// The seed list shared by every variant.
    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.replications as u64).map(|i| self.base_seed + i).collect(),
        }
    }

    pub fn variant_config(&self, v: &Variant) -> RunConfig {
        let t = &self.run;
        RunConfig {
            estimator: v.estimator,
            d: v.d.unwrap_or(t.d),
            e: v.e.unwrap_or(t.e),
            f: v.f.unwrap_or(t.f),
            g: v.g.unwrap_or(t.g),
            dual_estimate_mode: v.dual_estimate_mode.or(t.dual_estimate_mode),
            ..t.clone()
        }
    }
}

/// Per-checkpoint mean and population standard deviation of each
/// coordinate of `x^k - x*` across replications, plus the mean squared norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSeries {
    pub label: String,
    pub coordinates: Vec<String>,
    pub k: Vec<usize>,
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    pub mse: Vec<f64>,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub label: String,
    pub estimator: EstimatorKind,
    pub series: AggregateSeries,
    pub seeds: Vec<u64>,
    /// Terminal states of the replications that finished, in seed order.
    pub terminals: Vec<IterateState>,
    pub diverged: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub x_sharp: Vec<f64>,
    pub variants: Vec<VariantReport>,
}

/// Coordinate labels: primal names, then `l1, l2, ...` for the duals.
pub fn coordinate_names(problem: &dyn ChanceProblem) -> Vec<String> {
    let mut names = problem.primal_names();
    names.extend((1..=problem.dual_dim()).map(|i| format!("l{i}")));
    names
}

/// Reference point `x* = (u*, lambda*)` from the problem oracle.
pub fn reference_point(problem: &dyn ChanceProblem) -> Result<Vec<f64>> {
    let (u, l) = problem.reference_solution()?;
    Ok(u.into_iter().chain(l).collect())
}

fn with_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs `config` once per seed, in parallel. Results come back in the order
/// of `seeds`.
pub fn run_replications(
    problem: &dyn ChanceProblem,
    config: &RunConfig,
    seeds: &[u64],
    workers: Option<usize>,
) -> Result<Vec<(u64, Result<Trajectory>)>> {
    config.validate()?;
    with_pool(workers, || {
        seeds
            .par_iter()
            .map(|&seed| {
                let cfg = RunConfig { seed, ..config.clone() };
                (seed, solver::run_problem(problem, &cfg))
            })
            .collect()
    })
}

/// Aggregates trajectories (taken in ascending seed order) at the
/// checkpoints of the first one.
pub fn aggregate(
    label: &str,
    coordinates: Vec<String>,
    trajectories: &[Trajectory],
    x_sharp: &[f64],
) -> Result<AggregateSeries> {
    let mut order: Vec<&Trajectory> = trajectories.iter().collect();
    order.sort_by_key(|t| t.seed);
    let Some(first) = order.first() else {
        return Err(Error::param("trajectories", "nothing to aggregate"));
    };
    let d = x_sharp.len();
    let m = order.len() as f64;
    let mut series = AggregateSeries {
        label: label.to_string(),
        coordinates,
        k: Vec::new(),
        mean: Vec::new(),
        std: Vec::new(),
        mse: Vec::new(),
        replications: order.len(),
    };
    for (i, rec) in first.records.iter().enumerate() {
        let mut errs = Vec::with_capacity(order.len());
        for t in &order {
            let s = t.records.get(i).filter(|s| s.k == rec.k).ok_or_else(|| {
                Error::Numerical(format!("trajectory for seed {} lacks checkpoint {}", t.seed, rec.k))
            })?;
            let x = s.flat();
            errs.push((0..d).map(|j| x[j] - x_sharp[j]).collect::<Vec<f64>>());
        }
        let mean: Vec<f64> = (0..d).map(|j| errs.iter().map(|e| e[j]).sum::<f64>() / m).collect();
        let std: Vec<f64> = (0..d)
            .map(|j| (errs.iter().map(|e| (e[j] - mean[j]).powi(2)).sum::<f64>() / m).sqrt())
            .collect();
        let mse = errs.iter().map(|e| e.iter().map(|x| x * x).sum::<f64>()).sum::<f64>() / m;
        series.k.push(rec.k);
        series.mean.push(mean);
        series.std.push(std);
        series.mse.push(mse);
    }
    Ok(series)
}

/// Runs every variant over the shared seed list, aggregates, and writes
/// CSVs, the plot script and a JSON summary when `out_dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let problem = config.run.problem.build()?;
    let x_sharp = reference_point(problem.as_ref())?;
    let seeds = config.seed_list();
    let mut variants = Vec::new();
    for variant in &config.variants {
        let kind = variant.estimator;
        let label = variant.label();
        let cfg = config.variant_config(variant);
        let results = run_replications(problem.as_ref(), &cfg, &seeds, config.workers)?;
        let mut good = Vec::new();
        let mut diverged = Vec::new();
        let mut first_divergence = None;
        for (seed, r) in results {
            match r {
                Ok(t) => good.push(t),
                Err(e @ Error::Divergence { .. }) => {
                    log::warn!("{label} replication with seed {seed}: {e}");
                    diverged.push(seed);
                    first_divergence.get_or_insert(e);
                }
                Err(e) => return Err(e),
            }
        }
        if good.is_empty() {
            log::error!("every {label} replication diverged");
            return Err(first_divergence.expect("no seeds means validation failed"));
        }
        good.sort_by_key(|t| t.seed);
        let series = aggregate(&label, coordinate_names(problem.as_ref()), &good, &x_sharp)?;
        variants.push(VariantReport {
            label,
            estimator: kind,
            series,
            seeds: seeds.clone(),
            terminals: good.into_iter().map(|t| t.terminal).collect(),
            diverged,
        });
    }
    let report = ExperimentReport { x_sharp, variants };
    if let Some(dir) = &config.out_dir {
        write_outputs(&report, dir, config.emit_plots)?;
    }
    Ok(report)
}

fn write_outputs(report: &ExperimentReport, dir: &Path, plots: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csvs = Vec::new();
    for v in &report.variants {
        let name = format!("{}.csv", v.series.label);
        emit_csv(&v.series, &dir.join(&name))?;
        csvs.push((v.series.clone(), name));
    }
    if plots {
        emit_plot_script(&csvs, &dir.join("plot.gp"))?;
    }
    let summary = serde_json::json!({
        "x_sharp": report.x_sharp,
        "variants": report.variants.iter().map(|v| serde_json::json!({
            "label": v.label,
            "estimator": v.estimator,
            "replications": v.series.replications,
            "diverged": v.diverged,
            "terminal_mean_error": v.series.mean.last(),
            "terminal_std_error": v.series.std.last(),
        })).collect::<Vec<_>>(),
    });
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

/// Header `k,mean_<c>,std_<c>,...` then one row per checkpoint.
pub fn csv_string(series: &AggregateSeries) -> String {
    let mut out = String::from("k");
    for c in &series.coordinates {
        write!(out, ",mean_{c},std_{c}").unwrap();
    }
    out.push('\n');
    for (i, k) in series.k.iter().enumerate() {
        write!(out, "{k}").unwrap();
        for (m, s) in series.mean[i].iter().zip(&series.std[i]) {
            write!(out, ",{m:.8e},{s:.8e}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn emit_csv(series: &AggregateSeries, path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(series))?;
    Ok(())
}

fn dash_type(label: &str) -> u8 {
    // AC solid, FD dashed, anything else dotted
    if label.starts_with("ac") {
        1
    } else if label.starts_with("fd") {
        2
    } else {
        3
    }
}

/// Gnuplot script: one panel per coordinate, mean line with a mean +- std
/// band per series. `series` pairs each aggregate with its CSV path as the
/// script should reference it.
pub fn plot_script(series: &[(AggregateSeries, String)]) -> Result<String> {
    let Some((first, _)) = series.first() else {
        return Err(Error::param("series", "at least one series is required"));
    };
    let coords = &first.coordinates;
    let colors = ["#1f4e9c", "#b22222", "#2e8b57", "#8b008b"];
    let cols = 2;
    let rows = coords.len().div_ceil(cols);
    let mut s = String::new();
    s.push_str("set terminal pngcairo size 1200,900\n");
    s.push_str("set output 'experiment.png'\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    writeln!(s, "set multiplot layout {rows},{cols} title 'x^k - x*: mean +- std'").unwrap();
    for (j, c) in coords.iter().enumerate() {
        writeln!(s, "set title '{c}'").unwrap();
        s.push_str("set xlabel 'k'\n");
        let mean_col = 2 + 2 * j;
        let std_col = mean_col + 1;
        let mut parts = Vec::new();
        for (i, (ser, path)) in series.iter().enumerate() {
            let color = colors[i % colors.len()];
            let dt = dash_type(&ser.label);
            parts.push(format!(
                "'{path}' using 1:(${mean_col}-${std_col}):(${mean_col}+${std_col}) with filledcurves \
                 fs transparent solid 0.15 lc rgb '{color}' notitle"
            ));
            parts.push(format!(
                "'{path}' using 1:{mean_col} with lines dt {dt} lw 2 lc rgb '{color}' title '{}'",
                ser.label
            ));
        }
        writeln!(s, "plot {}", parts.join(", \\\n     ")).unwrap();
    }
    s.push_str("unset multiplot\n");
    Ok(s)
}

pub fn emit_plot_script(series: &[(AggregateSeries, String)], path: &Path) -> Result<()> {
    std::fs::write(path, plot_script(series)?)?;
    Ok(())
}
