use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::benchmarks::{ObjectiveConfig, OBJECTIVE_NAMES};
use crate::error::{Error, Result};
use crate::gp::GpUcbConfig;
use crate::vbo::VboConfig;

/// Optimisers the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Vbo,
    GpUcb,
    Random,
    /// VBO-MI with the exploration term replaced by the GP posterior σ.
    VboGpExploration,
    /// VBO-MI with the exploitation term replaced by the GP posterior mean.
    VboGpExploitation,
}

impl MethodName {
    pub const ALL: [MethodName; 5] = [
        MethodName::Vbo,
        MethodName::GpUcb,
        MethodName::Random,
        MethodName::VboGpExploration,
        MethodName::VboGpExploitation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Vbo => "vbo",
            MethodName::GpUcb => "gp_ucb",
            MethodName::Random => "random",
            MethodName::VboGpExploration => "vbo_gp_exploration",
            MethodName::VboGpExploitation => "vbo_gp_exploitation",
        }
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "method",
                name: s.to_string(),
            })
    }
}

/// Random search settings. Unset fields follow the VBO section, so the
/// baseline spends the same budget in the same batch size.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomSearchConfig {
    pub iterations: Option<usize>,
    pub batch: Option<usize>,
}

/// A one-parameter sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// One of [`SWEEP_PARAMETERS`].
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Parameters a sweep may vary.
pub const SWEEP_PARAMETERS: [&str; 9] = [
    "beta",
    "batch",
    "lr_action",
    "lr_critic",
    "critic_steps",
    "actor_steps",
    "iterations",
    "warmup_steps",
    "noise_sd",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSection {
    /// Methods to run; `compare` needs two or more.
    pub methods: Vec<MethodName>,
    pub n_seeds: usize,
    /// First seed when `seeds` is empty; the run uses `base_seed + i`.
    pub base_seed: u64,
    /// Explicit seeds; overrides `n_seeds` and `base_seed`.
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Concurrent (method, seed) jobs.
    pub jobs: usize,
    /// Iterations averaged for the final reward.
    pub final_window: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            methods: vec![MethodName::Vbo],
            n_seeds: 1,
            base_seed: 0,
            seeds: Vec::new(),
            output_dir: PathBuf::from("results"),
            jobs: 1,
            final_window: 20,
        }
    }
}

/// Everything one experiment needs. Unknown keys are rejected by
/// [`ExperimentConfig::from_toml`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub objective: ObjectiveConfig,
    pub vbo: VboConfig,
    pub gp_ucb: GpUcbConfig,
    pub random: RandomSearchConfig,
    pub sweep: Option<SweepConfig>,
}

impl ExperimentConfig {
    /// Parse TOML, listing every unrecognised key in one error.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        let cfg: Self = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| Error::Config(e.to_string()))?;
        if !unknown.is_empty() {
            return Err(Error::UnknownKeys(unknown));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// The resolved configuration with every default spelled out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn seeds(&self) -> Vec<u64> {
        let e = &self.experiment;
        if e.seeds.is_empty() {
            (0..e.n_seeds as u64).map(|i| e.base_seed + i).collect()
        } else {
            e.seeds.clone()
        }
    }

    pub fn random_batch(&self) -> usize {
        self.random.batch.unwrap_or(self.vbo.batch)
    }

    pub fn random_iterations(&self) -> usize {
        self.random
            .iterations
            .unwrap_or((self.vbo.planned_evaluations()).div_ceil(self.random_batch()))
    }

    /// Objective calls one seed of `method` plans to make.
    pub fn planned_evaluations(&self, method: MethodName) -> usize {
        match method {
            MethodName::Vbo | MethodName::VboGpExploration | MethodName::VboGpExploitation => {
                let planned = self.vbo.planned_evaluations();
                self.vbo.max_evaluations.map_or(planned, |cap| planned.min(cap))
            }
            MethodName::GpUcb => self.gp_ucb.iterations * self.gp_ucb.batch,
            MethodName::Random => self.random_iterations() * self.random_batch(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.methods.is_empty() {
            return Err(Error::Config("experiment.methods is empty".into()));
        }
        if !OBJECTIVE_NAMES.contains(&self.objective.name.as_str()) {
            return Err(Error::Unknown {
                kind: "objective",
                name: self.objective.name.clone(),
            });
        }
        let seeds = self.seeds();
        if seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(Error::Config(format!("seeds must be distinct, got {seeds:?}")));
        }
        if e.jobs == 0 || e.final_window == 0 {
            return Err(Error::Config("jobs and final_window must be positive".into()));
        }
        for m in &e.methods {
            match m {
                MethodName::GpUcb => self.gp_ucb.validate()?,
                MethodName::Random => {
                    if self.random_batch() == 0 || self.random_iterations() == 0 {
                        return Err(Error::Config("random search needs batch ≥ 1 and iterations ≥ 1".into()));
                    }
                }
                _ => self.vbo.validate()?,
            }
        }
        if let Some(s) = &self.sweep {
            if !SWEEP_PARAMETERS.contains(&s.parameter.as_str()) {
                return Err(Error::Unknown {
                    kind: "sweep parameter",
                    name: s.parameter.clone(),
                });
            }
            if s.values.len() < 2 || s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("a sweep needs at least two finite values".into()));
            }
        }
        Ok(())
    }

    /// A copy with one sweep parameter set to `value`.
    pub fn with_parameter(&self, parameter: &str, value: f64) -> Result<Self> {
        let mut c = self.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!(
                    "{parameter} needs a non-negative integer, got {v}"
                )))
            }
        };
        match parameter {
            "beta" => {
                c.vbo.beta = value;
                c.gp_ucb.beta = value;
            }
            "batch" => {
                c.vbo.batch = count(value)?;
                c.gp_ucb.batch = c.vbo.batch;
            }
            "lr_action" => c.vbo.lr_action = value,
            "lr_critic" => c.vbo.lr_critic = value,
            "critic_steps" => c.vbo.critic_steps = count(value)?,
            "actor_steps" => c.vbo.actor_steps = count(value)?,
            "iterations" => {
                c.vbo.iterations = count(value)?;
                c.gp_ucb.iterations = c.vbo.iterations;
            }
            "warmup_steps" => c.vbo.warmup_steps = count(value)?,
            "noise_sd" => c.objective.noise_sd = value,
            other => {
                return Err(Error::Unknown {
                    kind: "sweep parameter",
                    name: other.to_string(),
                })
            }
        }
        c.sweep = None;
        c.validate()?;
        Ok(c)
    }
}
