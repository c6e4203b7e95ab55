//! Objective functions, all in the maximisation convention.

mod brusselator;
mod noise;
mod pest;
mod synthetic;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use brusselator::{Brusselator, BrusselatorConfig};
pub use noise::NoisyObjective;
pub use pest::{onehot_decode, onehot_encode, PestConfig, PestControl, N_CATEGORIES, N_STAGES};
pub use synthetic::{Ackley, Branin, Constant, Hartmann6, Quadratic};

use crate::error::{Error, Result};
use crate::nn::Bounds;

/// A known maximiser and its value.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownOptimum {
    pub x: Vec<f64>,
    pub value: f64,
}

/// A deterministic black-box function to maximise over a box.
///
/// Implementors provide [`Objective::raw`]; callers use
/// [`Objective::evaluate`], which validates the input first.
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;

    fn bounds(&self) -> &Bounds;

    fn dim(&self) -> usize {
        self.bounds().dim()
    }

    /// Function value at an in-bounds point.
    fn raw(&self, x: &[f64]) -> Result<f64>;

    fn known_optimum(&self) -> Option<KnownOptimum> {
        None
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if !self.bounds().contains(x) {
            return Err(Error::OutOfBounds {
                objective: self.name().to_string(),
                x: x.to_vec(),
            });
        }
        let v = self.raw(x)?;
        if v.is_nan() {
            return Err(Error::ObjectiveNaN { x: x.to_vec() });
        }
        Ok(v)
    }
}

/// Objective selection as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub name: String,
    /// Dimension for objectives that accept one (`ackley`, `quadratic`, `constant`).
    pub dim: Option<usize>,
    /// Standard deviation of additive Gaussian observation noise.
    pub noise_sd: f64,
    /// Value of the `constant` objective.
    pub constant: f64,
    pub brusselator: BrusselatorConfig,
    pub pest: PestConfig,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            name: "branin".into(),
            dim: None,
            noise_sd: 0.0,
            constant: 0.0,
            brusselator: BrusselatorConfig::default(),
            pest: PestConfig::default(),
        }
    }
}

/// Names accepted by [`build_objective`].
pub const OBJECTIVE_NAMES: [&str; 7] = [
    "branin",
    "hartmann6",
    "ackley",
    "brusselator",
    "pest_control",
    "quadratic",
    "constant",
];

pub fn build_objective(cfg: &ObjectiveConfig) -> Result<Arc<dyn Objective>> {
    if !(cfg.noise_sd >= 0.0 && cfg.noise_sd.is_finite()) {
        return Err(Error::Config(format!(
            "noise_sd must be finite and ≥ 0, got {}",
            cfg.noise_sd
        )));
    }
    let fixed_dim = |name: &str, d: usize| match cfg.dim {
        Some(v) if v != d => Err(Error::Config(format!("{name} is {d}-dimensional, got dim = {v}"))),
        _ => Ok(()),
    };
    Ok(match cfg.name.as_str() {
        "branin" => {
            fixed_dim("branin", 2)?;
            Arc::new(Branin::new())
        }
        "hartmann6" => {
            fixed_dim("hartmann6", 6)?;
            Arc::new(Hartmann6::new())
        }
        "ackley" => Arc::new(Ackley::new(cfg.dim.unwrap_or(10))?),
        "quadratic" => Arc::new(Quadratic::new(cfg.dim.unwrap_or(1))?),
        "constant" => Arc::new(Constant::new(cfg.dim.unwrap_or(1), cfg.constant)?),
        "brusselator" => {
            fixed_dim("brusselator", 4)?;
            Arc::new(Brusselator::new(cfg.brusselator.clone())?)
        }
        "pest_control" => {
            fixed_dim("pest_control", N_STAGES * N_CATEGORIES)?;
            Arc::new(PestControl::new(cfg.pest.clone()))
        }
        other => {
            return Err(Error::Unknown {
                kind: "objective",
                name: other.to_string(),
            })
        }
    })
}
