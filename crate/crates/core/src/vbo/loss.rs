use crate::autodiff::{MacCounter, Phase, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::gp::ScaledGp;
use crate::mi::{critic_dv, MiEstimate, PairPlan, PairingMode};
use crate::nn::{ActionNet, BoundParams, Bounds, CellState, Critic, RewardHead};

use super::config::{ExploitationMode, ExplorationMode, VboConfig};

/// Maps inputs to `[-1, 1]` and observations to zero mean, unit spread,
/// before they reach the critic or the reward head targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    x_scale: Vec<f64>,
    x_shift: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

impl Scaling {
    pub fn new(bounds: &Bounds) -> Self {
        let x_scale: Vec<f64> = bounds.half_width().iter().map(|h| 1.0 / h).collect();
        let x_shift = bounds.mid().iter().zip(&x_scale).map(|(m, s)| -m * s).collect();
        Self {
            x_scale,
            x_shift,
            y_mean: 0.0,
            y_std: 1.0,
        }
    }

    /// Refresh the output statistics from every observation so far.
    pub fn fit_y(&mut self, ys: &[f64]) {
        if ys.is_empty() {
            return;
        }
        let n = ys.len() as f64;
        let m = ys.iter().sum::<f64>() / n;
        let s = (ys.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        self.y_mean = m;
        self.y_std = if s > 1e-12 { s } else { 1.0 };
    }

    pub fn y(&self, v: f64) -> f64 {
        (v - self.y_mean) / self.y_std
    }

    pub fn y_tensor(&self, t: &Tensor) -> Tensor {
        Tensor::from_fn(t.shape(), |k| self.y(t.data()[k]))
    }

    pub fn x_tensor(&self, t: &Tensor) -> Tensor {
        let d = self.x_scale.len();
        Tensor::from_fn(t.shape(), |k| t.data()[k] * self.x_scale[k % d] + self.x_shift[k % d])
    }

    /// The input map recorded on a tape.
    pub fn x_on_tape(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.col_affine(x, &self.x_scale, &self.x_shift)
    }
}

/// One critic update on scaled trajectories; returns the bound before the step.
#[allow(clippy::too_many_arguments)]
pub fn critic_update<R: rand::Rng + ?Sized>(
    critic: &mut Critic,
    xs: &[Tensor],
    ys: &[Tensor],
    mode: PairingMode,
    lr: f64,
    adam: &crate::autodiff::AdamConfig,
    rng: &mut R,
    counter: Option<&MacCounter>,
) -> Result<MiEstimate> {
    let mut tape = Tape::counted(counter, Phase::CriticUpdate);
    let p = critic.params().bind(&mut tape, true);
    let xv: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
    let yv: Vec<Var> = ys.iter().map(|y| tape.constant(y.clone())).collect();
    let dv = critic_dv(&mut tape, critic, &p, &xv, &yv, mode, rng)?;
    let est = dv.estimate(&tape, mode);
    if !est.value.is_finite() {
        return Err(Error::TrainingDiverged(est.value));
    }
    let loss = tape.neg(dv.value)?;
    let grads = tape.backward(loss)?;
    critic.params_mut().adam_update(&p.gradients(&grads)?, lr, adam)?;
    Ok(est)
}

/// Everything the actor loss reads besides `φ`; fixed for one actor phase.
#[derive(Debug, Clone)]
pub struct ActorContext {
    /// Seeds `s_t`, `B × seed_dim`.
    pub seeds: Tensor,
    /// Latest observed batch, scaled, `B × 1`.
    pub latest_y: Tensor,
    /// Row pairing of the critic's scores.
    pub plan: PairPlan,
    /// Critic state after the scaled history for the pairs of `plan`;
    /// `None` starts the candidates from the zero state.
    pub prefix: Option<(Tensor, Tensor)>,
    /// Surrogate for the GP ablation modes.
    pub gp: Option<ScaledGp>,
}

/// The frozen networks read by the actor loss.
#[derive(Clone, Copy)]
pub struct Frozen<'a> {
    pub critic: &'a Critic,
    pub reward: &'a RewardHead,
    pub scaling: &'a Scaling,
}

/// The actor loss and its parts, all on one tape.
#[derive(Debug, Clone, Copy)]
pub struct ActorLoss {
    /// `L_E = −[exploitation + sign · √β · exploration]`.
    pub loss: Var,
    pub exploitation: Var,
    /// Absent when the term is switched off or `β = 0`.
    pub exploration: Option<Var>,
    /// Candidate actions `B × d`.
    pub actions: Var,
}

/// Row-wise GP component with a central-difference Jacobian.
fn gp_surrogate(
    tape: &mut Tape,
    x: Var,
    gp: &ScaledGp,
    fd_step: f64,
    component: impl Fn(&ScaledGp, &[f64]) -> f64,
) -> Result<Var> {
    let xv = tape.value(x).clone();
    let (n, d) = (xv.rows(), xv.cols());
    let widths: Vec<f64> = gp.bounds().half_width().iter().map(|h| 2.0 * h).collect();
    let mut values = Vec::with_capacity(n);
    let mut jac = Tensor::zeros(&[n, d]);
    for i in 0..n {
        let row = xv.row(i).to_vec();
        values.push(component(gp, &row));
        for k in 0..d {
            let h = fd_step * widths[k];
            let mut a = row.clone();
            let mut b = row.clone();
            a[k] += h;
            b[k] -= h;
            jac.data_mut()[i * d + k] = (component(gp, &a) - component(gp, &b)) / (2.0 * h);
        }
    }
    tape.surrogate(x, values, jac)
}

/// Exploitation term at the candidates `x`, and the reward-head prediction
/// when one was made.
pub fn exploitation_term(
    tape: &mut Tape,
    x: Var,
    mode: ExploitationMode,
    frozen: Frozen<'_>,
    ctx: &ActorContext,
    fd_step: f64,
) -> Result<(Var, Option<Var>)> {
    match mode {
        ExploitationMode::RewardHead => {
            let p = frozen.reward.params().bind(tape, false);
            let pred = frozen.reward.forward(tape, &p, x)?;
            Ok((tape.mean(pred)?, Some(pred)))
        }
        ExploitationMode::BatchMeanConstant => {
            let y = &ctx.latest_y;
            let mean = y.data().iter().sum::<f64>() / y.numel().max(1) as f64;
            Ok((tape.constant(Tensor::scalar(mean)), None))
        }
        ExploitationMode::GpMean => {
            let gp = ctx
                .gp
                .as_ref()
                .ok_or_else(|| Error::invalid("gp_mean exploitation needs a fitted surrogate"))?;
            let mu = gp_surrogate(tape, x, gp, fd_step, |g, r| g.predict_standardized(r).0)?;
            Ok((tape.mean(mu)?, None))
        }
    }
}

/// DV bound with the candidates appended as the newest step.
pub fn candidate_dv(tape: &mut Tape, x: Var, y_candidate: Var, frozen: Frozen<'_>, ctx: &ActorContext) -> Result<Var> {
    let critic = frozen.critic;
    let p = critic.params().bind(tape, false);
    let xs = frozen.scaling.x_on_tape(tape, x)?;
    let init = match &ctx.prefix {
        Some((h, c)) => CellState {
            h: tape.constant(h.clone()),
            c: tape.constant(c.clone()),
        },
        None => critic.zero_state(tape, ctx.plan.pairs.len()),
    };
    let st = critic.run(tape, &p, &[xs], &[y_candidate], Some(&ctx.plan.pairs), Some(init))?;
    let scores = critic.readout(tape, &p, st.h)?;
    Ok(ctx.plan.dv(tape, scores)?.value)
}

/// Build `L_E` for the current actor parameters `p`.
///
/// The action net is charged to [`Phase::ActorUpdate`]; the frozen critic,
/// reward head and GP to [`Phase::Evaluation`].
pub fn action_net_loss(
    tape: &mut Tape,
    action: &ActionNet,
    p: &BoundParams,
    frozen: Frozen<'_>,
    ctx: &ActorContext,
    cfg: &VboConfig,
) -> Result<ActorLoss> {
    if !(cfg.beta >= 0.0 && cfg.beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be finite and ≥ 0, got {}", cfg.beta)));
    }
    tape.set_phase(Phase::ActorUpdate);
    let seeds = tape.constant(ctx.seeds.clone());
    let x = action.forward(tape, p, seeds)?;
    tape.set_phase(Phase::Evaluation);
    let (exploit, pred) = exploitation_term(tape, x, cfg.exploitation_mode, frozen, ctx, cfg.gp.fd_step)?;

    let exploration = if cfg.beta == 0.0 {
        None
    } else {
        match cfg.exploration_mode {
            ExplorationMode::None => None,
            ExplorationMode::DvMi => {
                let y_cand = match pred {
                    Some(v) => v,
                    None => tape.constant(ctx.latest_y.clone()),
                };
                Some(candidate_dv(tape, x, y_cand, frozen, ctx)?)
            }
            ExplorationMode::GpSigma => {
                let gp = ctx
                    .gp
                    .as_ref()
                    .ok_or_else(|| Error::invalid("gp_sigma exploration needs a fitted surrogate"))?;
                let s = gp_surrogate(tape, x, gp, cfg.gp.fd_step, |g, r| g.predict_standardized(r).1)?;
                Some(tape.mean(s)?)
            }
        }
    };

    let total = match exploration {
        Some(e) => {
            let w = tape.scale(e, cfg.exploration_sign * cfg.beta.sqrt())?;
            tape.add(exploit, w)?
        }
        None => exploit,
    };
    let loss = tape.neg(total)?;
    tape.set_phase(Phase::ActorUpdate);
    Ok(ActorLoss {
        loss,
        exploitation: exploit,
        exploration,
        actions: x,
    })
}
