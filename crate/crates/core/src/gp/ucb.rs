use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::RbfKernel;
use super::model::{GpModel, HyperFitConfig};
use crate::error::{Error, Result};
use crate::nn::Bounds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UcbConfig {
    /// Uniform candidates scored before refinement.
    pub candidate_pool_size: usize,
    /// Best pool points that are refined.
    pub n_restarts: usize,
    /// Coordinate-search sweeps per restart.
    pub n_refine_steps: usize,
}

impl Default for UcbConfig {
    fn default() -> Self {
        Self {
            candidate_pool_size: 1024,
            n_restarts: 10,
            n_refine_steps: 50,
        }
    }
}

impl UcbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidate_pool_size == 0 || self.n_restarts == 0 {
            return Err(Error::Config("UCB pool size and restart count must be positive".into()));
        }
        Ok(())
    }
}

/// Result of [`maximize_acquisition`].
#[derive(Debug, Clone, PartialEq)]
pub struct Maximizer {
    pub x: Vec<f64>,
    pub value: f64,
    /// Acquisition evaluations spent.
    pub evaluations: usize,
}

/// Derivative-free multistart maximisation: score a uniform pool, then
/// refine the best `n_restarts` by coordinate search whose step halves after
/// a sweep without improvement.
pub fn maximize_acquisition<R: Rng + ?Sized>(
    acq: impl Fn(&[f64]) -> f64,
    bounds: &Bounds,
    cfg: &UcbConfig,
    rng: &mut R,
) -> Maximizer {
    let (lo, hi) = (bounds.lo(), bounds.hi());
    let d = bounds.dim();
    let mut pool: Vec<(f64, Vec<f64>)> = (0..cfg.candidate_pool_size)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|i| rng.random_range(lo[i]..=hi[i])).collect();
            (acq(&x), x)
        })
        .collect();
    let mut evaluations = pool.len();
    // Stable sort keeps the earliest draw first among ties.
    pool.sort_by(|a, b| b.0.total_cmp(&a.0));
    pool.truncate(cfg.n_restarts.max(1));

    let mut best: Option<(f64, Vec<f64>)> = None;
    for (mut fx, mut x) in pool {
        let mut step: Vec<f64> = (0..d).map(|i| 0.1 * (hi[i] - lo[i])).collect();
        for _ in 0..cfg.n_refine_steps {
            let mut improved = false;
            for i in 0..d {
                for dir in [1.0, -1.0] {
                    let mut c = x.clone();
                    c[i] = (c[i] + dir * step[i]).clamp(lo[i], hi[i]);
                    if c[i] == x[i] {
                        continue;
                    }
                    let fc = acq(&c);
                    evaluations += 1;
                    if fc > fx {
                        fx = fc;
                        x = c;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step.iter_mut().for_each(|s| *s *= 0.5);
            }
        }
        if best.as_ref().map_or(true, |b| fx > b.0) {
            best = Some((fx, x));
        }
    }
    let (value, x) = best.expect("at least one restart");
    Maximizer { x, value, evaluations }
}

/// `argmax μ(x) + √β σ(x)` over `bounds`.
pub fn ucb_acquire<R: Rng + ?Sized>(
    model: &GpModel,
    beta: f64,
    bounds: &Bounds,
    cfg: &UcbConfig,
    rng: &mut R,
) -> Maximizer {
    let w = beta.max(0.0).sqrt();
    maximize_acquisition(
        |x| {
            let (mu, sigma) = model.posterior(x);
            mu + w * sigma
        },
        bounds,
        cfg,
        rng,
    )
}

/// A GP fitted in unit-cube inputs and standardised outputs, queried in the
/// objective's own coordinates.
#[derive(Debug, Clone)]
pub struct ScaledGp {
    bounds: Bounds,
    y_mean: f64,
    y_std: f64,
    model: GpModel,
}

impl ScaledGp {
    /// Fit to raw observations; `x` is row-major `n × d` in `bounds`.
    pub fn fit(bounds: &Bounds, kernel: RbfKernel, noise_variance: f64, x: &[f64], y: &[f64]) -> Result<Self> {
        let n = y.len();
        let (y_mean, y_std) = if n == 0 {
            (0.0, 1.0)
        } else {
            let m = y.iter().sum::<f64>() / n as f64;
            let s = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            (m, if s > 1e-12 { s } else { 1.0 })
        };
        let d = bounds.dim();
        let unit: Vec<f64> = x.chunks(d).flat_map(|row| to_unit(bounds, row)).collect();
        let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_std).collect();
        Ok(Self {
            bounds: bounds.clone(),
            y_mean,
            y_std,
            model: GpModel::fit(kernel, noise_variance, unit, ys)?,
        })
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// `(mean, sd)` used to standardise the targets.
    pub fn scaling(&self) -> (f64, f64) {
        (self.y_mean, self.y_std)
    }

    /// Posterior in standardised output units.
    pub fn predict_standardized(&self, x: &[f64]) -> (f64, f64) {
        self.model.posterior(&to_unit(&self.bounds, x))
    }

    /// Posterior in the objective's units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (mu, sigma) = self.predict_standardized(x);
        (self.y_mean + self.y_std * mu, self.y_std * sigma)
    }

    /// Add one raw observation without changing the output scaling.
    pub fn condition(&self, x: &[f64], y: f64) -> Result<Self> {
        let model = self
            .model
            .with_observation(&to_unit(&self.bounds, x), (y - self.y_mean) / self.y_std)?;
        Ok(Self { model, ..self.clone() })
    }

    /// Refit the hyperparameters, keeping the data and scaling.
    pub fn optimize_hyperparameters(&self, cfg: &HyperFitConfig) -> Result<(Self, Vec<f64>)> {
        let (model, trace) = self.model.optimize_hyperparameters(cfg)?;
        Ok((Self { model, ..self.clone() }, trace))
    }

    /// `argmax μ + √β σ` in the objective's coordinates.
    pub fn acquire<R: Rng + ?Sized>(&self, beta: f64, cfg: &UcbConfig, rng: &mut R) -> Maximizer {
        let d = self.bounds.dim();
        let unit = Bounds::new(&vec![(0.0, 1.0); d]).expect("unit box");
        let mut m = ucb_acquire(&self.model, beta, &unit, cfg, rng);
        m.x = from_unit(&self.bounds, &m.x);
        m
    }
}

pub fn to_unit(bounds: &Bounds, x: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(bounds.lo().iter().zip(bounds.hi()))
        .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
        .collect()
}

/// Inverse of [`to_unit`], clamped so rounding never leaves the box.
pub fn from_unit(bounds: &Bounds, u: &[f64]) -> Vec<f64> {
    u.iter()
        .zip(bounds.lo().iter().zip(bounds.hi()))
        .map(|(v, (lo, hi))| (lo + v * (hi - lo)).clamp(*lo, *hi))
        .collect()
}
