use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vbomi::autodiff::Tensor;
use vbomi::flops::{flops_table, ComplexityParams, Method};
use vbomi::harness::{compare, run_experiment, sweep, ExperimentConfig};
use vbomi::mi::{estimate_mi, MiEstimatorConfig};
use vbomi::{Error, Result};

#[derive(Parser)]
#[command(
    name = "vbomi",
    version,
    about = "Variational Bayesian optimization with a mutual-information critic"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Run a single seed instead of the configured ones.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `experiment.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent (method, seed) jobs.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method and seed.
    Run(ExperimentArgs),
    /// Repeat the experiment over the values of `[sweep]`.
    Sweep(ExperimentArgs),
    /// Run the configured methods at equal budgets and tabulate final rewards.
    Compare(ExperimentArgs),
    /// Print the model-FLOP table as CSV.
    Flops {
        /// TOML file with cost-model constants; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        t_min: u64,
        #[arg(long, default_value_t = 1000)]
        t_max: u64,
        #[arg(long, default_value_t = 10)]
        t_step: u64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate I(X; Y) from paired samples in a numeric CSV file.
    EstimateMi {
        /// One sample per row, comma- or whitespace-separated; an optional
        /// non-numeric header is skipped.
        #[arg(long)]
        input: PathBuf,
        /// The first `x_dims` columns are X, the rest Y.
        #[arg(long, default_value_t = 1)]
        x_dims: usize,
        /// TOML file with estimator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_experiment(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.experiment.seeds = vec![s];
    }
    if let Some(out) = &a.out {
        cfg.experiment.output_dir = out.clone();
    }
    if let Some(j) = a.jobs {
        cfg.experiment.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let de = toml::Deserializer::parse(&text).map_err(|e| Error::Config(e.to_string()))?;
    let mut unknown = Vec::new();
    let v =
        serde_ignored::deserialize(de, |p| unknown.push(p.to_string())).map_err(|e| Error::Config(e.to_string()))?;
    if unknown.is_empty() {
        Ok(v)
    } else {
        Err(Error::UnknownKeys(unknown))
    }
}

fn report_failures(runs: &[vbomi::trace::RunResult]) -> bool {
    let mut ok = true;
    for r in runs {
        if let vbomi::trace::RunStatus::Failed(msg) = &r.status {
            eprintln!("{} seed {} failed: {msg}", r.method, r.seed);
            ok = false;
        }
    }
    ok
}

fn read_samples(path: &Path, x_dims: usize) -> Result<(Tensor, Tensor)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .map(str::parse::<f64>)
            .collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::Config(format!("line {}: non-numeric field", i + 1))),
        }
    }
    let width = rows.first().map_or(0, Vec::len);
    if x_dims == 0 || width <= x_dims || rows.iter().any(|r| r.len() != width) {
        return Err(Error::Config(format!(
            "expected rows of equal width greater than x_dims = {x_dims}"
        )));
    }
    let n = rows.len();
    let x = rows.iter().flat_map(|r| r[..x_dims].iter().copied()).collect();
    let y = rows.iter().flat_map(|r| r[x_dims..].iter().copied()).collect();
    Ok((
        Tensor::new(vec![n, x_dims], x)?,
        Tensor::new(vec![n, width - x_dims], y)?,
    ))
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(a) => {
            let report = run_experiment(&load_experiment(&a)?)?;
            for r in &report.runs {
                println!(
                    "{} seed {}: best {} over {} evaluations",
                    r.method, r.seed, r.best_y, r.evaluations
                );
            }
            Ok(report_failures(&report.runs))
        }
        Command::Sweep(a) => {
            let cfg = load_experiment(&a)?;
            let cells = sweep(&cfg)?;
            let mut ok = true;
            for c in &cells {
                for r in &c.table.rows {
                    println!(
                        "{} = {}: {} final {:.6} ± {:.6}",
                        cfg.sweep.as_ref().map_or("", |s| &s.parameter),
                        c.value,
                        r.method,
                        r.mean,
                        r.std()
                    );
                }
                ok &= report_failures(&c.report.runs);
            }
            Ok(ok)
        }
        Command::Compare(a) => {
            let (report, table) = compare(&load_experiment(&a)?)?;
            print!("{}", table.to_markdown());
            Ok(report_failures(&report.runs))
        }
        Command::Flops {
            config,
            t_min,
            t_max,
            t_step,
            out,
        } => {
            let params: ComplexityParams = match config {
                Some(p) => read_toml(&p)?,
                None => ComplexityParams::default(),
            };
            if t_min == 0 || t_step == 0 || t_min > t_max {
                return Err(Error::Config("need 1 ≤ t_min ≤ t_max and t_step ≥ 1".into()));
            }
            let ts: Vec<u64> = (t_min..=t_max).step_by(t_step as usize).collect();
            let mut csv = String::from("method,T,surrogate,acquisition,total\n");
            for r in flops_table(&Method::ALL, &ts, &params)? {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    r.method, r.t, r.surrogate_flops, r.acquisition_flops, r.total
                );
            }
            match out {
                Some(p) => std::fs::write(&p, csv).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                None => print!("{csv}"),
            }
            Ok(true)
        }
        Command::EstimateMi {
            input,
            x_dims,
            config,
            seed,
        } => {
            let mut cfg: MiEstimatorConfig = match config {
                Some(p) => read_toml(&p)?,
                None => MiEstimatorConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (x, y) = read_samples(&input, x_dims)?;
            let fit = estimate_mi(&x, &y, &cfg)?;
            println!("estimate_nats,steps");
            println!("{},{}", fit.estimate.value, fit.steps);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
