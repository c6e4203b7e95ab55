//! Per-iteration records and run results shared by every optimiser.

use std::collections::BTreeMap;

use crate::autodiff::Tensor;

/// One optimiser iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    /// 1-based iteration index.
    pub iteration: usize,
    pub batch_rewards: Vec<f64>,
    pub mean_reward: f64,
    pub batch_max: f64,
    pub best_so_far: f64,
    /// Running mean of `mean_reward` over iterations `1..=iteration`.
    pub s_t: f64,
    pub mi_estimate: f64,
    pub loss_action: f64,
    pub loss_critic: f64,
    /// Model FLOPs charged to this iteration.
    pub model_flops: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The evaluation budget ran out before all iterations finished.
    BudgetExhausted {
        evaluations: usize,
    },
    Failed(String),
}

impl RunStatus {
    pub fn is_success(&self) -> bool {
        !matches!(self, RunStatus::Failed(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub method: String,
    pub seed: u64,
    pub traces: Vec<IterationTrace>,
    /// Best evaluated point over the whole run, warm-up included.
    pub best_x: Vec<f64>,
    pub best_y: f64,
    /// All objective calls, warm-up included.
    pub evaluations: usize,
    pub warmup_evaluations: usize,
    pub status: RunStatus,
    /// Final network parameters, keyed `network/block`.
    pub params: BTreeMap<String, Tensor>,
}

impl RunResult {
    /// Mean of the last `k` per-iteration mean rewards (all when fewer).
    pub fn final_reward(&self, k: usize) -> f64 {
        let n = self.traces.len();
        if n == 0 {
            return f64::NAN;
        }
        let tail = &self.traces[n.saturating_sub(k)..];
        tail.iter().map(|t| t.mean_reward).sum::<f64>() / tail.len() as f64
    }
}

/// `S_t = (1/t) Σ_{t' ≤ t} r_{t'}`.
pub fn average_reward(mean_rewards: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    mean_rewards
        .iter()
        .enumerate()
        .map(|(i, r)| {
            sum += r;
            sum / (i + 1) as f64
        })
        .collect()
}

/// Incrementally builds traces and tracks the incumbent.
#[derive(Debug, Clone)]
pub struct Recorder {
    reward_sum: f64,
    pub best_x: Vec<f64>,
    pub best_y: f64,
    pub evaluations: usize,
    pub traces: Vec<IterationTrace>,
}

impl Default for Recorder {
    fn default() -> Self {
        Self {
            reward_sum: 0.0,
            best_x: Vec::new(),
            best_y: f64::NEG_INFINITY,
            evaluations: 0,
            traces: Vec::new(),
        }
    }
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Count one evaluation and update the incumbent.
    pub fn observe(&mut self, x: &[f64], y: f64) {
        self.evaluations += 1;
        if y > self.best_y {
            self.best_y = y;
            self.best_x = x.to_vec();
        }
    }

    /// Close an iteration whose batch rewards have already been observed.
    pub fn push(
        &mut self,
        batch_rewards: Vec<f64>,
        mi_estimate: f64,
        loss_action: f64,
        loss_critic: f64,
        model_flops: u64,
    ) -> &IterationTrace {
        let mean = batch_rewards.iter().sum::<f64>() / batch_rewards.len().max(1) as f64;
        let max = batch_rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.reward_sum += mean;
        let iteration = self.traces.len() + 1;
        self.traces.push(IterationTrace {
            iteration,
            batch_rewards,
            mean_reward: mean,
            batch_max: max,
            best_so_far: self.best_y,
            s_t: self.reward_sum / iteration as f64,
            mi_estimate,
            loss_action,
            loss_critic,
            model_flops,
        });
        self.traces.last().expect("just pushed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_reward_examples() {
        assert_eq!(average_reward(&[1.0, 3.0]), vec![1.0, 2.0]);
        assert_eq!(average_reward(&[4.0; 3]), vec![4.0; 3]);
    }

    #[test]
    fn recorder_tracks_best_and_running_mean() {
        let mut r = Recorder::new();
        r.observe(&[0.0], 1.0);
        r.observe(&[1.0], 3.0);
        r.push(vec![1.0, 3.0], 0.0, 0.0, 0.0, 0);
        r.observe(&[2.0], 0.0);
        let t = r.push(vec![0.0], 0.0, 0.0, 0.0, 0).clone();
        assert_eq!(t.best_so_far, 3.0);
        assert_eq!(t.s_t, 1.0);
        assert_eq!(r.best_x, vec![1.0]);
        assert_eq!(r.evaluations, 3);
    }
}
