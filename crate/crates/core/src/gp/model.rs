use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::kernel::RbfKernel;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// Exact zero-mean GP regression conditioned on `(X, Y)`.
///
/// Immutable once fitted; adding data builds a new model.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: RbfKernel,
    noise_variance: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    chol: Option<Cholesky>,
    /// `(K + σ²I)⁻¹ Y`.
    alpha: Vec<f64>,
    jitter: f64,
}

impl GpModel {
    /// Factor `K + σ²I`, adding jitter from the ladder if needed.
    pub fn fit(kernel: RbfKernel, noise_variance: f64, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        let d = kernel.dim();
        if x.len() != y.len() * d {
            return Err(Error::invalid(format!(
                "{} inputs of width {d} do not match {} targets",
                x.len() as f64 / d as f64,
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("GP training data".into()));
        }
        let n = y.len();
        if n == 0 {
            return Ok(Self {
                kernel,
                noise_variance,
                x,
                y,
                chol: None,
                alpha: Vec::new(),
                jitter: 0.0,
            });
        }
        let mut k = kernel.gram(&x);
        for i in 0..n {
            k[i * n + i] += noise_variance;
        }
        let (chol, jitter) = Cholesky::factor_with_jitter(&k, n)?;
        let alpha = chol.solve(&y);
        Ok(Self {
            kernel,
            noise_variance,
            x,
            y,
            chol: Some(chol),
            alpha,
            jitter,
        })
    }

    pub fn kernel(&self) -> &RbfKernel {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn inputs(&self) -> &[f64] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    /// Jitter that was added to the diagonal to make the factorisation succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn cholesky(&self) -> Option<&Cholesky> {
        self.chol.as_ref()
    }

    /// Posterior mean and standard deviation at one point.
    pub fn posterior(&self, q: &[f64]) -> (f64, f64) {
        let prior = self.kernel.signal_variance();
        let Some(chol) = &self.chol else {
            return (0.0, prior.sqrt());
        };
        let mut kq = self.kernel.cross(&self.x, q);
        let mu = kq.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        chol.solve_lower(&mut kq);
        let explained: f64 = kq.iter().map(|v| v * v).sum();
        (mu, (prior - explained).max(0.0).sqrt())
    }

    /// Row-wise [`GpModel::posterior`] over row-major `q`.
    pub fn posterior_batch(&self, q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        q.chunks(self.kernel.dim()).map(|row| self.posterior(row)).unzip()
    }

    /// A new model with one more observation.
    pub fn with_observation(&self, x: &[f64], y: f64) -> Result<Self> {
        let mut xs = self.x.clone();
        xs.extend_from_slice(x);
        let mut ys = self.y.clone();
        ys.push(y);
        Self::fit(self.kernel.clone(), self.noise_variance, xs, ys)
    }

    /// `log p(Y | X) = −½ Yᵀα − ½ log|K + σ²I| − (n/2) log 2π`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let Some(chol) = &self.chol else {
            return 0.0;
        };
        let fit: f64 = self.y.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        -0.5 * fit - 0.5 * chol.log_det() - 0.5 * self.len() as f64 * (2.0 * PI).ln()
    }

    /// Gradient of the log marginal likelihood in
    /// `[log ℓ_1 .. log ℓ_d, log s, log σ²]`.
    fn lml_gradient(&self) -> Vec<f64> {
        let d = self.kernel.dim();
        let mut g = vec![0.0; d + 2];
        let Some(chol) = &self.chol else {
            return g;
        };
        let n = self.len();
        let inv = chol.inverse();
        let ls = self.kernel.lengthscales();
        for i in 0..n {
            for j in 0..=i {
                // ½ (ααᵀ − K⁻¹)_ij, the weight of ∂K_ij, counted for both
                // (i, j) and (j, i) off the diagonal.
                let sym = if i == j { 0.5 } else { 1.0 };
                let w = sym * (self.alpha[i] * self.alpha[j] - inv[i * n + j]);
                let xi = &self.x[i * d..(i + 1) * d];
                let xj = &self.x[j * d..(j + 1) * d];
                let kij = self.kernel.eval(xi, xj);
                for (m, l) in ls.iter().enumerate() {
                    g[m] += w * kij * ((xi[m] - xj[m]) / l).powi(2);
                }
                g[d] += w * kij;
                if i == j {
                    g[d + 1] += w * self.noise_variance;
                }
            }
        }
        g
    }

    /// Projected ascent on the log marginal likelihood in log-hyperparameter
    /// space. A step is kept only when it raises the likelihood, so the
    /// returned trace is non-decreasing.
    pub fn optimize_hyperparameters(&self, cfg: &HyperFitConfig) -> Result<(GpModel, Vec<f64>)> {
        let mut best = self.clone();
        let mut trace = vec![best.log_marginal_likelihood()];
        if self.is_empty() {
            return Ok((best, trace));
        }
        let d = self.kernel.dim();
        let lo: Vec<f64> = std::iter::repeat(cfg.lengthscale_range.0.ln())
            .take(d)
            .chain([cfg.min_signal_variance.ln(), cfg.noise_range.0.ln()])
            .collect();
        let hi: Vec<f64> = std::iter::repeat(cfg.lengthscale_range.1.ln())
            .take(d)
            .chain([0.0, cfg.noise_range.1.ln()])
            .collect();
        let mut step = cfg.initial_step;
        for _ in 0..cfg.steps {
            let g = best.lml_gradient();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                break;
            }
            let theta = best.log_hyperparameters();
            let cand: Vec<f64> = theta
                .iter()
                .zip(&g)
                .enumerate()
                .map(|(k, (t, gk))| (t + step * gk / norm).clamp(lo[k], hi[k]))
                .collect();
            let kept = Self::from_log_hyperparameters(&cand, &best)
                .ok()
                .filter(|m| m.log_marginal_likelihood() > *trace.last().expect("non-empty"));
            match kept {
                Some(m) => {
                    trace.push(m.log_marginal_likelihood());
                    best = m;
                    step *= 1.5;
                }
                None => {
                    step *= 0.5;
                    if step < 1e-6 {
                        break;
                    }
                }
            }
        }
        Ok((best, trace))
    }

    fn log_hyperparameters(&self) -> Vec<f64> {
        self.kernel
            .lengthscales()
            .iter()
            .map(|l| l.ln())
            .chain([self.kernel.signal_variance().ln(), self.noise_variance.ln()])
            .collect()
    }

    fn from_log_hyperparameters(theta: &[f64], data: &GpModel) -> Result<Self> {
        let d = data.kernel.dim();
        // exp(0) is exactly 1, so the signal-variance cap survives the round trip.
        let kernel = RbfKernel::new(theta[..d].iter().map(|t| t.exp()).collect(), theta[d].exp().min(1.0))?;
        Self::fit(kernel, theta[d + 1].exp(), data.x.clone(), data.y.clone())
    }
}

/// Settings of [`GpModel::optimize_hyperparameters`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperFitConfig {
    pub steps: usize,
    /// Initial step length in log-hyperparameter space.
    pub initial_step: f64,
    pub lengthscale_range: (f64, f64),
    pub noise_range: (f64, f64),
    pub min_signal_variance: f64,
}

impl Default for HyperFitConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            initial_step: 0.5,
            lengthscale_range: (0.01, 10.0),
            noise_range: (1e-6, 0.5),
            min_signal_variance: 1e-3,
        }
    }
}

/// `F = ½ log|I + σ⁻² K|` in nats.
pub fn info_gain(x: &[f64], kernel: &RbfKernel, noise_variance: f64) -> Result<f64> {
    if !(noise_variance > 0.0) {
        return Err(Error::invalid("noise variance must be positive"));
    }
    let n = x.len() / kernel.dim();
    if n == 0 {
        return Ok(0.0);
    }
    let mut a = kernel.gram(x);
    for v in &mut a {
        *v /= noise_variance;
    }
    for i in 0..n {
        a[i * n + i] += 1.0;
    }
    let (chol, _) = Cholesky::factor_with_jitter(&a, n)?;
    Ok(0.5 * chol.log_det())
}

/// Posterior mean and standard deviation for each row of `x_batch`; the GP
/// components substituted into the ablated optimisers.
pub fn ablation_components(model: &GpModel, x_batch: &[f64]) -> (Vec<f64>, Vec<f64>) {
    model.posterior_batch(x_batch)
}
