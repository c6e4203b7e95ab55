use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::RbfKernel;
use super::model::{info_gain, HyperFitConfig};
use super::ucb::{to_unit, ScaledGp, UcbConfig};
use crate::benchmarks::NoisyObjective;
use crate::error::{Error, Result};
use crate::trace::{Recorder, RunResult, RunStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpUcbConfig {
    pub iterations: usize,
    /// Points per iteration; more than one are chosen sequentially, each
    /// conditioning on the earlier ones with their posterior mean as the
    /// observation, which shrinks σ and leaves μ unchanged.
    pub batch: usize,
    pub beta: f64,
    pub ucb: UcbConfig,
    /// Initial lengthscale in unit-cube coordinates.
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// Marginal-likelihood refit period in iterations; 0 disables refits.
    pub refit_every: usize,
    pub hyper: HyperFitConfig,
    pub seed: u64,
}

impl Default for GpUcbConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            batch: 1,
            beta: 4.0,
            ucb: UcbConfig::default(),
            lengthscale: 0.2,
            signal_variance: 1.0,
            noise_variance: 1e-4,
            refit_every: 5,
            hyper: HyperFitConfig::default(),
            seed: 0,
        }
    }
}

impl GpUcbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch == 0 {
            return Err(Error::Config("gp_ucb needs iterations ≥ 1 and batch ≥ 1".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be finite and ≥ 0, got {}", self.beta)));
        }
        self.ucb.validate()
    }
}

/// Approximate floating-point operations of one GP-UCB iteration with `n`
/// points in `d` dimensions: one factorisation plus `acq_evals` posterior
/// queries, each a kernel row and a triangular solve.
pub fn gp_iteration_flops(n: usize, d: usize, acq_evals: usize) -> u64 {
    let (n, d, a) = (n as u64, d as u64, acq_evals as u64);
    n * n * n / 3 + a * (n * (3 * d + 4) + n * n)
}

/// Sequential GP-UCB with `iterations × batch` objective evaluations.
pub fn run_gp_ucb(cfg: &GpUcbConfig, objective: &mut NoisyObjective) -> Result<RunResult> {
    cfg.validate()?;
    let f = objective.objective().clone();
    let bounds = f.bounds().clone();
    let d = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut kernel = RbfKernel::isotropic(d, cfg.lengthscale, cfg.signal_variance)?;
    let mut noise = cfg.noise_variance;
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut rec = Recorder::new();

    for it in 0..cfg.iterations {
        let mut gp = ScaledGp::fit(&bounds, kernel.clone(), noise, &xs, &ys)?;
        let mut flops = gp_iteration_flops(ys.len(), d, 0);
        if cfg.refit_every > 0 && it % cfg.refit_every == 0 && ys.len() >= 2 {
            let (fitted, trace) = gp.optimize_hyperparameters(&cfg.hyper)?;
            flops += trace.len() as u64 * gp_iteration_flops(ys.len(), d, 0) * 4;
            gp = fitted;
            kernel = gp.model().kernel().clone();
            noise = gp.model().noise_variance();
        }
        let lml = gp.model().log_marginal_likelihood();

        let mut batch_x = Vec::with_capacity(cfg.batch);
        let mut fantasy = gp.clone();
        for b in 0..cfg.batch {
            let m = fantasy.acquire(cfg.beta, &cfg.ucb, &mut rng);
            flops += gp_iteration_flops(ys.len() + b, d, m.evaluations);
            if b + 1 < cfg.batch {
                let (mu, _) = fantasy.predict(&m.x);
                fantasy = fantasy.condition(&m.x, mu)?;
            }
            batch_x.push(m.x);
        }

        let mut rewards = Vec::with_capacity(cfg.batch);
        for x in &batch_x {
            let y = objective.evaluate(x)?;
            rec.observe(x, y);
            xs.extend_from_slice(x);
            ys.push(y);
            rewards.push(y);
        }
        let unit: Vec<f64> = xs.chunks(d).flat_map(|r| to_unit(&bounds, r)).collect();
        let gain = info_gain(&unit, &kernel, noise)?;
        let n_before = (ys.len() - rewards.len()).max(1) as f64;
        rec.push(rewards, gain, f64::NAN, -lml / n_before, flops);
    }

    Ok(RunResult {
        method: "gp_ucb".into(),
        seed: cfg.seed,
        traces: rec.traces,
        best_x: rec.best_x,
        best_y: rec.best_y,
        evaluations: rec.evaluations,
        warmup_evaluations: 0,
        status: RunStatus::Completed,
        params: BTreeMap::new(),
    })
}
