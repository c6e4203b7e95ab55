use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Objective;
use crate::error::{Error, Result};
use crate::nn::Bounds;

/// Brusselator reaction–diffusion on a periodic square:
///
/// ```text
/// u_t = Du ∇²u + A − (B + 1) u + u² v
/// v_t = Dv ∇²v + B u − u² v
/// ```
///
/// integrated by explicit Euler with the 5-point Laplacian. The start state
/// is the homogeneous equilibrium `(A, B/A)` plus a smooth perturbation built
/// from low Fourier modes, so every grid resolution samples the same field.
///
/// The step is the diffusion-stable `dt` shortened, where needed, so that
/// `dt · ‖J‖∞ ≤ 1` for the local reaction Jacobian `J`; spike-forming
/// parameters otherwise blow up the explicit scheme long before the
/// diffusion limit binds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BrusselatorConfig {
    pub grid: usize,
    /// Side length of the square domain.
    pub length: f64,
    pub horizon: f64,
    /// Fixed step; `None` picks a stable one per evaluation.
    pub dt: Option<f64>,
    /// Upper limit on the automatically chosen step.
    pub max_dt: f64,
    /// Sup-norm of the initial perturbation of each field.
    pub amplitude: f64,
    pub seed: u64,
    /// Parameters used by the numerical-consistency checks; they sit in the
    /// Turing regime and settle into a stationary pattern within the horizon.
    pub reference: [f64; 4],
    /// Upper limit on the number of steps of one simulation.
    pub max_steps: usize,
    pub a_bounds: [f64; 2],
    pub b_bounds: [f64; 2],
    pub du_bounds: [f64; 2],
    pub dv_bounds: [f64; 2],
}

impl Default for BrusselatorConfig {
    fn default() -> Self {
        Self {
            grid: 32,
            length: 10.0,
            horizon: 40.0,
            dt: None,
            max_dt: 0.02,
            amplitude: 0.1,
            seed: 0,
            reference: [2.0, 3.5, 0.1, 1.0],
            max_steps: 1_000_000,
            a_bounds: [0.5, 2.0],
            b_bounds: [1.0, 4.0],
            du_bounds: [0.01, 1.0],
            dv_bounds: [0.01, 1.0],
        }
    }
}

/// Highest Fourier index used in the initial perturbation.
const MODES: usize = 3;

/// Final fields of one simulation, row-major `grid × grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrusselatorState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: usize,
    /// The diffusion-limited step; reaction stiffness may shorten individual steps.
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct Brusselator {
    config: BrusselatorConfig,
    bounds: Bounds,
    /// `(kx, ky, coefficient, phase)` per field.
    modes: [Vec<(f64, f64, f64, f64)>; 2],
}

impl Brusselator {
    pub fn new(config: BrusselatorConfig) -> Result<Self> {
        if config.grid < 3 || !(config.length > 0.0) || !(config.horizon > 0.0) || !(config.max_dt > 0.0) {
            return Err(Error::Config(
                "brusselator needs grid ≥ 3 and positive length, horizon and max_dt".into(),
            ));
        }
        if !(config.amplitude >= 0.0) {
            return Err(Error::Config("brusselator amplitude must be ≥ 0".into()));
        }
        let bounds = Bounds::new(&[
            (config.a_bounds[0], config.a_bounds[1]),
            (config.b_bounds[0], config.b_bounds[1]),
            (config.du_bounds[0], config.du_bounds[1]),
            (config.dv_bounds[0], config.dv_bounds[1]),
        ])?;
        if config.a_bounds[0] <= 0.0 || config.du_bounds[0] <= 0.0 || config.dv_bounds[0] <= 0.0 {
            return Err(Error::Config("A, Du and Dv bounds must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut field_modes = || {
            let mut m = Vec::new();
            for kx in 0..=MODES {
                for ky in 0..=MODES {
                    if kx + ky == 0 {
                        continue;
                    }
                    let c: f64 = rng.sample(StandardNormal);
                    let phase = rng.random::<f64>() * 2.0 * PI;
                    m.push((kx as f64, ky as f64, c, phase));
                }
            }
            let norm: f64 = m.iter().map(|t| t.2.abs()).sum();
            for t in &mut m {
                t.2 /= norm;
            }
            m
        };
        let modes = [field_modes(), field_modes()];
        Ok(Self { config, bounds, modes })
    }

    pub fn config(&self) -> &BrusselatorConfig {
        &self.config
    }

    fn spacing(&self) -> f64 {
        self.config.length / self.config.grid as f64
    }

    /// Largest explicit-Euler step allowed by the diffusion terms.
    pub fn stability_limit(&self, du: f64, dv: f64) -> f64 {
        let h = self.spacing();
        h * h / (4.0 * du.max(dv))
    }

    fn perturbation(&self, field: usize, x: f64, y: f64) -> f64 {
        let w = 2.0 * PI / self.config.length;
        self.modes[field]
            .iter()
            .map(|&(kx, ky, c, ph)| c * (w * (kx * x + ky * y) + ph).cos())
            .sum::<f64>()
            * self.config.amplitude
    }

    /// Run the simulation for parameters `(A, B, Du, Dv)`.
    pub fn simulate(&self, p: &[f64]) -> Result<BrusselatorState> {
        let (a, b, du, dv) = (p[0], p[1], p[2], p[3]);
        let limit = self.stability_limit(du, dv);
        let dt = match self.config.dt {
            Some(dt) => {
                if !(dt > 0.0 && dt <= limit) {
                    return Err(Error::Unstable { dt, limit });
                }
                dt
            }
            None => {
                let target = self.config.max_dt.min(0.9 * limit);
                self.config.horizon / (self.config.horizon / target).ceil()
            }
        };

        let n = self.config.grid;
        let h = self.spacing();
        let mut u = vec![0.0; n * n];
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (j as f64 * h, i as f64 * h);
                u[i * n + j] = a + self.perturbation(0, x, y);
                v[i * n + j] = b / a + self.perturbation(1, x, y);
            }
        }
        let mut un = u.clone();
        let mut vn = v.clone();
        let stiffness = |uk: f64, vk: f64| {
            let (uu, uv2) = (uk * uk, 2.0 * uk * vk);
            ((uv2 - b - 1.0).abs() + uu).max((b - uv2).abs() + uu)
        };
        let mut stiff = u.iter().zip(&v).map(|(&x, &y)| stiffness(x, y)).fold(0.0, f64::max);

        let horizon = self.config.horizon;
        let mut t = 0.0;
        let mut steps = 0;
        while t < horizon {
            let mut tau = dt.min(1.0 / stiff);
            // Avoid a sliver of a final step from rounding.
            if t + tau >= horizon * (1.0 - 1e-12) {
                tau = horizon - t;
            }
            let (cu, cv) = (du * tau / (h * h), dv * tau / (h * h));
            stiff = 0.0;
            let mut finite = true;
            for i in 0..n {
                let up = if i == 0 { n - 1 } else { i - 1 };
                let dn = if i + 1 == n { 0 } else { i + 1 };
                for j in 0..n {
                    let lf = if j == 0 { n - 1 } else { j - 1 };
                    let rt = if j + 1 == n { 0 } else { j + 1 };
                    let k = i * n + j;
                    let (uk, vk) = (u[k], v[k]);
                    let lap_u = u[up * n + j] + u[dn * n + j] + u[i * n + lf] + u[i * n + rt] - 4.0 * uk;
                    let lap_v = v[up * n + j] + v[dn * n + j] + v[i * n + lf] + v[i * n + rt] - 4.0 * vk;
                    let uuv = uk * uk * vk;
                    let (a_k, b_k) = (
                        uk + cu * lap_u + tau * (a - (b + 1.0) * uk + uuv),
                        vk + cv * lap_v + tau * (b * uk - uuv),
                    );
                    un[k] = a_k;
                    vn[k] = b_k;
                    finite &= a_k.is_finite() && b_k.is_finite();
                    stiff = f64::max(stiff, stiffness(a_k, b_k));
                }
            }
            std::mem::swap(&mut u, &mut un);
            std::mem::swap(&mut v, &mut vn);
            t += tau;
            steps += 1;
            if !finite || (steps >= self.config.max_steps && t < horizon) {
                return Err(Error::SimulationDiverged { step: steps });
            }
        }
        Ok(BrusselatorState { u, v, steps, dt })
    }
}

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

impl Objective for Brusselator {
    fn name(&self) -> &str {
        "brusselator"
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Negative spatial variance of `u` at the final time.
    fn raw(&self, x: &[f64]) -> Result<f64> {
        Ok(-variance(&self.simulate(x)?.u))
    }
}
