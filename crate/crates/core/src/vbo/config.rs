use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::HyperFitConfig;
use crate::mi::PairingMode;
use crate::nn::{ActionNetConfig, CriticConfig, RewardHeadConfig};

/// Source of the exploitation term `E[y_t | history]` in the actor loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExploitationMode {
    /// Mean reward-head prediction at the candidates; differentiable in φ.
    #[default]
    RewardHead,
    /// Mean of the latest observed batch; a constant, so φ only sees it
    /// through the data.
    BatchMeanConstant,
    /// GP posterior mean at the candidates, differentiated by central
    /// differences.
    GpMean,
}

/// Source of the exploration term in the actor loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationMode {
    /// The critic's DV bound over the history extended by the candidates.
    #[default]
    DvMi,
    /// Mean GP posterior standard deviation at the candidates.
    GpSigma,
    /// No exploration term. The critic is still trained and reported.
    None,
}

/// GP surrogate settings for the ablation modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpAblationConfig {
    /// Initial lengthscale in unit-cube coordinates.
    pub lengthscale: f64,
    pub noise_variance: f64,
    /// Iterations between marginal-likelihood refits; 0 disables them.
    pub refit_every: usize,
    /// Most recent distinct points kept for the fit.
    pub max_points: usize,
    /// Central-difference step as a fraction of each coordinate's range.
    pub fd_step: f64,
    pub hyper: HyperFitConfig,
}

impl Default for GpAblationConfig {
    fn default() -> Self {
        Self {
            lengthscale: 0.2,
            noise_variance: 1e-4,
            refit_every: 5,
            max_points: 400,
            fd_step: 1e-4,
            hyper: HyperFitConfig::default(),
        }
    }
}

/// Hyperparameters of one VBO-MI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VboConfig {
    /// Warm-up critic updates `W`, each on a fresh batch from the fixed seed.
    pub warmup_steps: usize,
    /// Main iterations `T`.
    pub iterations: usize,
    /// Critic updates per iteration `K_a`.
    pub critic_steps: usize,
    /// Actor updates per iteration `K_b`.
    pub actor_steps: usize,
    /// Parallel trajectories `B`.
    pub batch: usize,
    pub beta: f64,
    pub lr_action: f64,
    pub lr_critic: f64,
    /// Learning rate of the reward head; defaults to `lr_critic` when absent.
    pub lr_reward: Option<f64>,
    pub seed: u64,
    /// `+1` adds the MI bound as an exploration bonus, `−1` subtracts it.
    pub exploration_sign: f64,
    pub exploitation_mode: ExploitationMode,
    pub exploration_mode: ExplorationMode,
    pub pairing: PairingMode,
    /// Most recent steps fed to the critic.
    pub history_window: usize,
    /// Hard cap on objective calls, warm-up included.
    pub max_evaluations: Option<usize>,
    pub action_net: ActionNetConfig,
    pub critic: CriticConfig,
    pub reward_head: RewardHeadConfig,
    pub gp: GpAblationConfig,
}

impl Default for VboConfig {
    fn default() -> Self {
        Self {
            warmup_steps: 25,
            iterations: 50,
            critic_steps: 1,
            actor_steps: 5,
            batch: 64,
            beta: 1.0,
            lr_action: 0.002,
            lr_critic: 0.002,
            lr_reward: None,
            seed: 0,
            exploration_sign: 1.0,
            exploitation_mode: ExploitationMode::RewardHead,
            exploration_mode: ExplorationMode::DvMi,
            pairing: PairingMode::AllPairs,
            history_window: 256,
            max_evaluations: None,
            action_net: ActionNetConfig::default(),
            critic: CriticConfig::default(),
            reward_head: RewardHeadConfig::default(),
            gp: GpAblationConfig::default(),
        }
    }
}

impl VboConfig {
    /// The default batch for a `d`-dimensional problem: 32 in two
    /// dimensions, 64 otherwise.
    pub fn default_batch(dim: usize) -> usize {
        if dim <= 2 {
            32
        } else {
            64
        }
    }

    /// Objective calls of a complete run, `W·B + T·B`.
    pub fn planned_evaluations(&self) -> usize {
        (self.warmup_steps + self.iterations) * self.batch
    }

    pub fn lr_reward(&self) -> f64 {
        self.lr_reward.unwrap_or(self.lr_critic)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch < 2 {
            return bad(format!("batch must be at least 2 for the MI bound, got {}", self.batch));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be finite and ≥ 0, got {}", self.beta));
        }
        if self.exploration_sign != 1.0 && self.exploration_sign != -1.0 {
            return bad(format!(
                "exploration_sign must be +1 or -1, got {}",
                self.exploration_sign
            ));
        }
        for (name, lr) in [
            ("lr_action", self.lr_action),
            ("lr_critic", self.lr_critic),
            ("lr_reward", self.lr_reward()),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        if self.history_window == 0 {
            return bad("history_window must be positive".into());
        }
        if self.gp.max_points == 0 || !(self.gp.fd_step > 0.0) || !(self.gp.noise_variance > 0.0) {
            return bad("gp ablation needs max_points ≥ 1, fd_step > 0 and noise_variance > 0".into());
        }
        Ok(())
    }

    /// Whether any term needs the GP surrogate.
    pub fn uses_gp(&self) -> bool {
        self.exploitation_mode == ExploitationMode::GpMean || self.exploration_mode == ExplorationMode::GpSigma
    }
}
