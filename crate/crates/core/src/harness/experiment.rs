use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, MethodName};
use super::csv::{final_reward_of_rows, fmt_f64, parse_trace_csv, plot_csv, summary_csv, trace_csv};
use super::random::random_search;
use crate::autodiff::write_checkpoint;
use crate::benchmarks::{build_objective, NoisyObjective};
use crate::error::{Error, Result};
use crate::gp::{run_gp_ucb, GpUcbConfig};
use crate::trace::{RunResult, RunStatus};
use crate::vbo::{run_named, ExploitationMode, ExplorationMode, VboConfig};

/// One (method, seed) run without touching the filesystem.
pub fn run_method(cfg: &ExperimentConfig, method: MethodName, seed: u64) -> Result<RunResult> {
    let f = build_objective(&cfg.objective)?;
    let mut obj = NoisyObjective::new(f, cfg.objective.noise_sd, seed)?;
    let vbo = |exploitation_mode, exploration_mode| VboConfig {
        seed,
        exploitation_mode,
        exploration_mode,
        ..cfg.vbo.clone()
    };
    match method {
        MethodName::Vbo => run_named(
            &VboConfig {
                seed,
                ..cfg.vbo.clone()
            },
            &mut obj,
            method.as_str(),
        ),
        MethodName::VboGpExploration => run_named(
            &vbo(cfg.vbo.exploitation_mode, ExplorationMode::GpSigma),
            &mut obj,
            method.as_str(),
        ),
        MethodName::VboGpExploitation => run_named(
            &vbo(ExploitationMode::GpMean, cfg.vbo.exploration_mode),
            &mut obj,
            method.as_str(),
        ),
        MethodName::GpUcb => run_gp_ucb(
            &GpUcbConfig {
                seed,
                ..cfg.gp_ucb.clone()
            },
            &mut obj,
        ),
        MethodName::Random => random_search(cfg.random_iterations(), cfg.random_batch(), seed, &mut obj),
    }
}

fn failed(method: MethodName, seed: u64, err: &Error) -> RunResult {
    RunResult {
        method: method.as_str().into(),
        seed,
        traces: Vec::new(),
        best_x: Vec::new(),
        best_y: f64::NAN,
        evaluations: 0,
        warmup_evaluations: 0,
        status: RunStatus::Failed(err.to_string()),
        params: BTreeMap::new(),
    }
}

/// Every (method, seed) run of one experiment, method-major.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub runs: Vec<RunResult>,
    pub final_window: usize,
    pub output_dir: PathBuf,
}

impl ExperimentReport {
    pub fn all_succeeded(&self) -> bool {
        self.runs.iter().all(|r| r.status.is_success())
    }

    pub fn runs_of(&self, method: MethodName) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.method == method.as_str())
    }
}

pub fn trace_file_name(method: &str, seed: u64) -> String {
    format!("{method}_seed{seed}.csv")
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Run all jobs in memory; a failing seed is recorded, not propagated.
pub fn execute(cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    cfg.validate()?;
    let jobs: Vec<(MethodName, u64)> = cfg
        .experiment
        .methods
        .iter()
        .flat_map(|&m| cfg.seeds().into_iter().map(move |s| (m, s)))
        .collect();
    let one = |&(m, s): &(MethodName, u64)| run_method(cfg, m, s).unwrap_or_else(|e| failed(m, s, &e));
    if cfg.experiment.jobs <= 1 {
        return Ok(jobs.iter().map(one).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.experiment.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(one).collect()))
}

pub fn checkpoint_file_name(method: &str, seed: u64) -> String {
    format!("{method}_seed{seed}.ckpt")
}

/// Write trace, summary, plot-data and resolved-config files for `runs`,
/// plus final-parameter checkpoints for runs that train networks.
pub fn write_outputs(cfg: &ExperimentConfig, runs: &[RunResult], dir: &Path) -> Result<()> {
    let traces = dir.join("traces");
    create_dir(&traces)?;
    for r in runs {
        write(&traces.join(trace_file_name(&r.method, r.seed)), &trace_csv(&r.traces))?;
    }
    let checkpoints = dir.join("checkpoints");
    for r in runs.iter().filter(|r| !r.params.is_empty()) {
        create_dir(&checkpoints)?;
        let path = checkpoints.join(checkpoint_file_name(&r.method, r.seed));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &r.params)?;
        std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    }
    write(
        &dir.join("summary.csv"),
        &summary_csv(runs, cfg.experiment.final_window),
    )?;
    write(&dir.join("plot_data.csv"), &plot_csv(runs))?;
    write(&dir.join("config.resolved.toml"), &cfg.to_toml()?)
}

/// Run every method and seed and write the results under the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let runs = execute(cfg)?;
    let dir = cfg.experiment.output_dir.clone();
    write_outputs(cfg, &runs, &dir)?;
    Ok(ExperimentReport {
        runs,
        final_window: cfg.experiment.final_window,
        output_dir: dir,
    })
}

/// Final-reward statistics of one method across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    /// Final rewards of the successful seeds, in seed order.
    pub per_seed: Vec<f64>,
    pub mean: f64,
    /// Sample variance across seeds; 0 for a single seed.
    pub variance: f64,
    pub median: f64,
    pub evaluations: usize,
}

impl ComparisonRow {
    fn from_values(method: &str, per_seed: Vec<f64>, evaluations: usize) -> Self {
        let n = per_seed.len();
        let mean = per_seed.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            per_seed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            method: method.to_string(),
            mean,
            variance,
            median: median(&per_seed),
            per_seed,
            evaluations,
        }
    }

    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Per-method mean of the last-`window`-iteration rewards and its spread.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub final_window: usize,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn from_runs(runs: &[RunResult], final_window: usize) -> Self {
        let mut order: Vec<&str> = Vec::new();
        for r in runs {
            if !order.contains(&r.method.as_str()) {
                order.push(&r.method);
            }
        }
        let rows = order
            .into_iter()
            .map(|m| {
                let ok: Vec<&RunResult> = runs
                    .iter()
                    .filter(|r| r.method == m && r.status.is_success() && !r.traces.is_empty())
                    .collect();
                let values = ok.iter().map(|r| r.final_reward(final_window)).collect();
                ComparisonRow::from_values(m, values, ok.first().map_or(0, |r| r.evaluations))
            })
            .collect();
        Self { final_window, rows }
    }

    /// Rebuild the table from trace files alone.
    pub fn from_trace_dir(dir: &Path, methods: &[MethodName], seeds: &[u64], final_window: usize) -> Result<Self> {
        let mut rows = Vec::new();
        for m in methods {
            let mut values = Vec::new();
            for &s in seeds {
                let path = dir.join(trace_file_name(m.as_str(), s));
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let parsed = parse_trace_csv(&text)?;
                if !parsed.is_empty() {
                    values.push(final_reward_of_rows(&parsed, final_window));
                }
            }
            rows.push(ComparisonRow::from_values(m.as_str(), values, 0));
        }
        Ok(Self { final_window, rows })
    }

    pub fn row(&self, method: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("method,n_seeds,final_reward_mean,final_reward_variance,final_reward_median,evaluations\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.method,
                r.per_seed.len(),
                fmt_f64(r.mean),
                fmt_f64(r.variance),
                fmt_f64(r.median),
                r.evaluations
            );
        }
        s
    }

    /// Markdown table of `mean ± std` per method.
    pub fn to_markdown(&self) -> String {
        let mut s = format!(
            "| Method | Average over the last {} iterations | Seeds |\n|---|---|---|\n",
            self.final_window
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {:.4} ± {:.4} | {} |",
                r.method,
                r.mean,
                r.std(),
                r.per_seed.len()
            );
        }
        s
    }
}

/// Run several methods at equal budgets and tabulate their final rewards.
pub fn compare(cfg: &ExperimentConfig) -> Result<(ExperimentReport, ComparisonTable)> {
    cfg.validate()?;
    let budgets: Vec<(MethodName, usize)> = cfg
        .experiment
        .methods
        .iter()
        .map(|&m| (m, cfg.planned_evaluations(m)))
        .collect();
    if budgets.windows(2).any(|w| w[0].1 != w[1].1) {
        let listed: Vec<String> = budgets.iter().map(|(m, b)| format!("{m}={b}")).collect();
        return Err(Error::Config(format!(
            "compare needs equal evaluation budgets, got {}",
            listed.join(", ")
        )));
    }
    let report = run_experiment(cfg)?;
    let table = ComparisonTable::from_runs(&report.runs, cfg.experiment.final_window);
    write(&report.output_dir.join("comparison.csv"), &table.to_csv())?;
    write(&report.output_dir.join("comparison.md"), &table.to_markdown())?;
    Ok((report, table))
}

/// One cell of a sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub value: f64,
    pub table: ComparisonTable,
    pub report: ExperimentReport,
}

/// Run the experiment once per sweep value, each in its own subdirectory,
/// and write `sensitivity.csv` with `(parameter, value, method, mean, std)`.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepCell>> {
    cfg.validate()?;
    let plan = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("sweep needs a [sweep] section".into()))?;
    let root = cfg.experiment.output_dir.clone();
    let mut cells = Vec::with_capacity(plan.values.len());
    let mut csv = String::from("parameter,value,method,final_reward_mean,final_reward_std,n_seeds\n");
    for &v in &plan.values {
        let mut cell_cfg = cfg.with_parameter(&plan.parameter, v)?;
        cell_cfg.experiment.output_dir = root.join(format!("{}={}", plan.parameter, fmt_f64(v)));
        let report = run_experiment(&cell_cfg)?;
        let table = ComparisonTable::from_runs(&report.runs, cfg.experiment.final_window);
        for r in &table.rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                plan.parameter,
                fmt_f64(v),
                r.method,
                fmt_f64(r.mean),
                fmt_f64(r.std()),
                r.per_seed.len()
            );
        }
        cells.push(SweepCell {
            value: v,
            table,
            report,
        });
    }
    create_dir(&root)?;
    write(&root.join("sensitivity.csv"), &csv)?;
    Ok(cells)
}
