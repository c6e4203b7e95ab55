use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExploitationMode, VboConfig};
use super::history::History;
use super::loss::{action_net_loss, critic_update, ActorContext, Frozen, Scaling};
use crate::autodiff::{AdamConfig, MacCounter, Phase, Tape, Tensor};
use crate::benchmarks::NoisyObjective;
use crate::error::{Error, Result};
use crate::gp::{RbfKernel, ScaledGp};
use crate::mi::PairPlan;
use crate::nn::{ActionNet, Bounds, Critic, RewardHead, SeedBatch};
use crate::trace::{IterationTrace, Recorder, RunResult, RunStatus};

/// Independent random streams of one run.
const STREAM_INIT: u64 = 0;
const STREAM_SEEDS: u64 = 1;
const STREAM_PAIRS: u64 = 2;
const STREAM_REWARD: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Outcome of one call to [`VboState::step`].
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Done(IterationTrace),
    /// The evaluation budget cannot cover another batch; nothing was evaluated.
    BudgetExhausted,
}

/// The mutable state of one VBO-MI run.
pub struct VboState {
    cfg: VboConfig,
    bounds: Bounds,
    pub action: ActionNet,
    pub critic: Critic,
    pub reward: RewardHead,
    pub history: History,
    scaling: Scaling,
    /// Every observation so far, warm-up included, for scaling and the
    /// reward head.
    all_x: Vec<f64>,
    all_y: Vec<f64>,
    seed_rng: ChaCha8Rng,
    pair_rng: ChaCha8Rng,
    reward_rng: ChaCha8Rng,
    adam: AdamConfig,
    counter: MacCounter,
    gp_kernel: Option<RbfKernel>,
    gp_noise: f64,
    recorder: Recorder,
    warmup_evaluations: usize,
}

impl VboState {
    pub fn new(cfg: VboConfig, bounds: Bounds) -> Result<Self> {
        cfg.validate()?;
        let d = bounds.dim();
        let mut init = stream(cfg.seed, STREAM_INIT);
        let action = ActionNet::new(cfg.action_net.clone(), bounds.clone(), &mut init)?;
        let critic = Critic::new(cfg.critic.clone(), d, &mut init)?;
        let reward = RewardHead::new(cfg.reward_head.clone(), &bounds, &mut init)?;
        let gp_kernel = if cfg.uses_gp() {
            Some(RbfKernel::isotropic(d, cfg.gp.lengthscale, 1.0)?)
        } else {
            None
        };
        Ok(Self {
            history: History::new(cfg.batch, d),
            scaling: Scaling::new(&bounds),
            seed_rng: stream(cfg.seed, STREAM_SEEDS),
            pair_rng: stream(cfg.seed, STREAM_PAIRS),
            reward_rng: stream(cfg.seed, STREAM_REWARD),
            gp_noise: cfg.gp.noise_variance,
            cfg,
            bounds,
            action,
            critic,
            reward,
            all_x: Vec::new(),
            all_y: Vec::new(),
            adam: AdamConfig::default(),
            counter: MacCounter::new(),
            gp_kernel,
            recorder: Recorder::new(),
            warmup_evaluations: 0,
        })
    }

    pub fn config(&self) -> &VboConfig {
        &self.cfg
    }

    pub fn counter(&self) -> &MacCounter {
        &self.counter
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    /// Objective calls so far, warm-up included.
    pub fn evaluations(&self) -> usize {
        self.recorder.evaluations
    }

    pub fn traces(&self) -> &[IterationTrace] {
        &self.recorder.traces
    }

    fn budget_allows_batch(&self) -> bool {
        self.cfg
            .max_evaluations
            .map_or(true, |cap| self.recorder.evaluations + self.cfg.batch <= cap)
    }

    fn evaluate_batch(&mut self, objective: &mut NoisyObjective, x: &Tensor) -> Result<Tensor> {
        let b = x.rows();
        let mut y = Vec::with_capacity(b);
        for i in 0..b {
            let row = x.row(i);
            let v = objective.evaluate(row)?;
            self.recorder.observe(row, v);
            self.all_x.extend_from_slice(row);
            self.all_y.push(v);
            y.push(v);
        }
        self.scaling.fit_y(&self.all_y);
        Tensor::new(vec![b, 1], y)
    }

    fn sample_actions(&self, seeds: &SeedBatch) -> Result<Tensor> {
        let mut tape = Tape::counted(Some(&self.counter), Phase::Evaluation);
        let p = self.action.params().bind(&mut tape, false);
        let s = tape.constant(seeds.values.clone());
        let out = self.action.forward(&mut tape, &p, s)?;
        let mut x = tape.value(out).clone();
        let (lo, hi) = (self.bounds.lo(), self.bounds.hi());
        let d = self.bounds.dim();
        for (k, v) in x.data_mut().iter_mut().enumerate() {
            *v = v.clamp(lo[k % d], hi[k % d]);
        }
        Ok(x)
    }

    fn fit_reward_head(&mut self) -> Result<Option<f64>> {
        if self.cfg.exploitation_mode != ExploitationMode::RewardHead || self.all_y.is_empty() {
            return Ok(None);
        }
        let n = self.all_y.len();
        let x = Tensor::new(vec![n, self.bounds.dim()], self.all_x.clone())?;
        let y: Vec<f64> = self.all_y.iter().map(|v| self.scaling.y(*v)).collect();
        let lr = self.cfg.lr_reward();
        let loss = self
            .reward
            .fit(&x, &y, lr, &self.adam, &mut self.reward_rng, Some(&self.counter))?;
        Ok(Some(loss))
    }

    /// Scaled critic inputs for the most recent `window` steps.
    fn scaled_window(&self, window: usize) -> (Vec<Tensor>, Vec<Tensor>) {
        let (xs, ys) = self.history.window(window);
        (
            xs.iter().map(|x| self.scaling.x_tensor(x)).collect(),
            ys.iter().map(|y| self.scaling.y_tensor(y)).collect(),
        )
    }

    fn critic_step(&mut self, xs: &[Tensor], ys: &[Tensor]) -> Result<f64> {
        let est = critic_update(
            &mut self.critic,
            xs,
            ys,
            self.cfg.pairing,
            self.cfg.lr_critic,
            &self.adam,
            &mut self.pair_rng,
            Some(&self.counter),
        )?;
        self.fit_reward_head()?;
        Ok(est.value)
    }

    /// Algorithm 1 warm-up: `W` critic updates on single-step batches from
    /// the fixed seed `s_0` with the action net frozen. Returns the bound
    /// before each update. Warm-up batches do not enter the history.
    pub fn warmup(&mut self, objective: &mut NoisyObjective) -> Result<Vec<f64>> {
        let s0 = SeedBatch::sample(&mut self.seed_rng, self.cfg.batch, self.cfg.action_net.seed_dim);
        let mut curve = Vec::with_capacity(self.cfg.warmup_steps);
        for _ in 0..self.cfg.warmup_steps {
            if !self.budget_allows_batch() {
                break;
            }
            let x = self.sample_actions(&s0)?;
            let y = self.evaluate_batch(objective, &x)?;
            self.warmup_evaluations += self.cfg.batch;
            let xs = [self.scaling.x_tensor(&x)];
            let ys = [self.scaling.y_tensor(&y)];
            curve.push(self.critic_step(&xs, &ys)?);
        }
        Ok(curve)
    }

    fn refresh_gp(&mut self) -> Result<Option<ScaledGp>> {
        let Some(kernel) = self.gp_kernel.clone() else {
            return Ok(None);
        };
        let d = self.bounds.dim();
        // Average repeated inputs, keep the most recent distinct points.
        let mut order: Vec<Vec<u64>> = Vec::new();
        let mut sums: BTreeMap<Vec<u64>, (f64, usize)> = BTreeMap::new();
        for (row, y) in self.all_x.chunks(d).zip(&self.all_y) {
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            let e = sums.entry(key.clone()).or_insert((0.0, 0));
            if e.1 == 0 {
                order.push(key);
            }
            e.0 += y;
            e.1 += 1;
        }
        let keep = &order[order.len().saturating_sub(self.cfg.gp.max_points)..];
        let mut xs = Vec::with_capacity(keep.len() * d);
        let mut ys = Vec::with_capacity(keep.len());
        for key in keep {
            xs.extend(key.iter().map(|b| f64::from_bits(*b)));
            let (s, n) = sums[key];
            ys.push(s / n as f64);
        }
        let mut gp = ScaledGp::fit(&self.bounds, kernel, self.gp_noise, &xs, &ys)?;
        let t = self.history.len();
        if self.cfg.gp.refit_every > 0 && t % self.cfg.gp.refit_every == 1 && ys.len() >= 2 {
            gp = gp.optimize_hyperparameters(&self.cfg.gp.hyper)?.0;
            self.gp_kernel = Some(gp.model().kernel().clone());
            self.gp_noise = gp.model().noise_variance();
        }
        Ok(Some(gp))
    }

    /// One main iteration: sample `s_t`, evaluate `B` actions, `K_a` critic
    /// updates with the actor frozen, then `K_b` actor updates with the
    /// critic frozen.
    pub fn step(&mut self, objective: &mut NoisyObjective) -> Result<StepOutcome> {
        if !self.budget_allows_batch() {
            return Ok(StepOutcome::BudgetExhausted);
        }
        let macs_before = self.counter.total();
        let seeds = SeedBatch::sample(&mut self.seed_rng, self.cfg.batch, self.cfg.action_net.seed_dim);
        let x = self.sample_actions(&seeds)?;
        let y = self.evaluate_batch(objective, &x)?;
        let rewards = y.data().to_vec();
        self.history.push(x, y.clone())?;

        let (xs, ys) = self.scaled_window(self.cfg.history_window);
        let mut mi = f64::NAN;
        for _ in 0..self.cfg.critic_steps {
            mi = self.critic_step(&xs, &ys)?;
        }

        let mut loss_action = f64::NAN;
        if self.cfg.actor_steps > 0 {
            let plan = PairPlan::new(self.cfg.batch, self.cfg.pairing, &mut self.pair_rng)?;
            // The candidate is the newest step, so the prefix holds one step fewer.
            let (px, py) = self.scaled_window(self.cfg.history_window - 1);
            let prefix = if px.is_empty() {
                None
            } else {
                Some(self.critic.state(&px, &py, Some(&plan.pairs), Some(&self.counter))?)
            };
            let ctx = ActorContext {
                seeds: seeds.values.clone(),
                latest_y: self.scaling.y_tensor(&y),
                plan,
                prefix,
                gp: self.refresh_gp()?,
            };
            for _ in 0..self.cfg.actor_steps {
                loss_action = self.actor_step(&ctx)?;
            }
        }

        let loss_critic = -mi;
        let flops = 2 * (self.counter.total() - macs_before);
        let trace = self.recorder.push(rewards, mi, loss_action, loss_critic, flops).clone();
        Ok(StepOutcome::Done(trace))
    }

    fn actor_step(&mut self, ctx: &ActorContext) -> Result<f64> {
        let mut tape = Tape::counted(Some(&self.counter), Phase::ActorUpdate);
        let p = self.action.params().bind(&mut tape, true);
        let frozen = Frozen {
            critic: &self.critic,
            reward: &self.reward,
            scaling: &self.scaling,
        };
        let parts = action_net_loss(&mut tape, &self.action, &p, frozen, ctx, &self.cfg)?;
        let value = tape.value(parts.loss).item();
        if !value.is_finite() {
            return Err(Error::TrainingDiverged(value));
        }
        let grads = tape.backward(parts.loss)?;
        self.action
            .params_mut()
            .adam_update(&p.gradients(&grads)?, self.cfg.lr_action, &self.adam)?;
        Ok(value)
    }

    /// Final parameters keyed `network/block`.
    pub fn params(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (net, set) in [
            ("action", self.action.params()),
            ("critic", self.critic.params()),
            ("reward", self.reward.params()),
        ] {
            for (k, v) in set.blocks() {
                out.insert(format!("{net}/{k}"), v.clone());
            }
        }
        out
    }

    pub fn into_result(self, method: &str, status: RunStatus) -> RunResult {
        let params = self.params();
        RunResult {
            method: method.to_string(),
            seed: self.cfg.seed,
            best_x: self.recorder.best_x,
            best_y: self.recorder.best_y,
            evaluations: self.recorder.evaluations,
            warmup_evaluations: self.warmup_evaluations,
            traces: self.recorder.traces,
            status,
            params,
        }
    }
}

/// Warm-up followed by `T` iterations. A budget cap ends the run early with
/// [`RunStatus::BudgetExhausted`] and keeps everything recorded so far.
pub fn run(cfg: &VboConfig, objective: &mut NoisyObjective) -> Result<RunResult> {
    run_named(cfg, objective, "vbo")
}

/// [`run`] with the method label used in the result.
pub fn run_named(cfg: &VboConfig, objective: &mut NoisyObjective, method: &str) -> Result<RunResult> {
    let bounds = objective.objective().bounds().clone();
    let mut state = VboState::new(cfg.clone(), bounds)?;
    state.warmup(objective)?;
    let mut status = RunStatus::Completed;
    if state.warmup_evaluations < cfg.warmup_steps * cfg.batch {
        status = RunStatus::BudgetExhausted {
            evaluations: state.evaluations(),
        };
    } else {
        for _ in 0..cfg.iterations {
            if state.step(objective)? == StepOutcome::BudgetExhausted {
                status = RunStatus::BudgetExhausted {
                    evaluations: state.evaluations(),
                };
                break;
            }
        }
    }
    Ok(state.into_result(method, status))
}
