use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vbomi::autodiff::{Tape, Tensor};
use vbomi::benchmarks::{build_objective, NoisyObjective, ObjectiveConfig};
use vbomi::mi::{PairPlan, PairingMode};
use vbomi::nn::SeedBatch;
use vbomi::trace::{RunResult, RunStatus};
use vbomi::vbo::{
    action_net_loss, run, ActorContext, ExploitationMode, ExplorationMode, Frozen, StepOutcome, VboConfig, VboState,
};

fn objective(name: &str, dim: Option<usize>, constant: f64, seed: u64) -> NoisyObjective {
    let f = build_objective(&ObjectiveConfig {
        name: name.into(),
        dim,
        constant,
        ..ObjectiveConfig::default()
    })
    .unwrap();
    NoisyObjective::new(f, 0.0, seed).unwrap()
}

fn quadratic() -> NoisyObjective {
    objective("quadratic", Some(1), 0.0, 0)
}

fn small() -> VboConfig {
    VboConfig {
        warmup_steps: 3,
        iterations: 4,
        batch: 8,
        ..VboConfig::default()
    }
}

/// Debug output covers every field and prints NaN consistently, unlike `==`.
fn fingerprint(r: &RunResult) -> String {
    format!("{r:?}")
}

#[test]
fn evaluation_count_is_warmup_plus_iterations() {
    let cfg = small();
    let r = run(&cfg, &mut quadratic()).unwrap();
    assert_eq!(r.evaluations, 3 * 8 + 4 * 8);
    assert_eq!(r.evaluations, cfg.planned_evaluations());
    assert_eq!(r.warmup_evaluations, 24);
    assert_eq!(r.traces.len(), 4);
    assert_eq!(r.status, RunStatus::Completed);
    assert!(r.traces.iter().all(|t| t.batch_rewards.len() == 8));
}

#[test]
fn budget_cap_stops_early_and_keeps_traces() {
    let cfg = VboConfig {
        max_evaluations: Some(3 * 8 + 2 * 8 + 5),
        ..small()
    };
    let r = run(&cfg, &mut quadratic()).unwrap();
    assert_eq!(r.evaluations, 40);
    assert_eq!(r.traces.len(), 2);
    assert_eq!(r.status, RunStatus::BudgetExhausted { evaluations: 40 });

    let cfg = VboConfig {
        max_evaluations: Some(10),
        ..small()
    };
    let r = run(&cfg, &mut quadratic()).unwrap();
    assert_eq!(r.evaluations, 8);
    assert!(r.traces.is_empty());
    assert!(matches!(r.status, RunStatus::BudgetExhausted { .. }));
}

#[test]
fn zero_iterations_runs_only_warmup() {
    let cfg = VboConfig {
        iterations: 0,
        ..small()
    };
    let r = run(&cfg, &mut quadratic()).unwrap();
    assert!(r.traces.is_empty());
    assert_eq!(r.evaluations, 24);
    assert!(r.best_y.is_finite());
}

#[test]
fn no_updates_leave_parameters_at_initialisation() {
    let cfg = VboConfig {
        warmup_steps: 0,
        critic_steps: 0,
        actor_steps: 0,
        ..small()
    };
    let mut obj = quadratic();
    let init = VboState::new(cfg.clone(), obj.objective().bounds().clone())
        .unwrap()
        .params();
    let r = run(&cfg, &mut obj).unwrap();
    assert_eq!(r.params, init);
    assert!(r
        .traces
        .iter()
        .all(|t| t.mi_estimate.is_nan() && t.loss_action.is_nan()));
}

#[test]
fn rerun_is_bit_identical() {
    let cfg = small();
    let a = run(&cfg, &mut quadratic()).unwrap();
    let b = run(&cfg, &mut quadratic()).unwrap();
    assert_eq!(fingerprint(&a), fingerprint(&b));
    let c = run(&VboConfig { seed: 1, ..cfg }, &mut quadratic()).unwrap();
    assert_ne!(fingerprint(&a), fingerprint(&c));
}

#[test]
fn constant_objective_stays_finite() {
    let cfg = small();
    let mut obj = objective("constant", Some(2), 3.0, 0);
    let r = run(&cfg, &mut obj).unwrap();
    assert_eq!(r.best_y, 3.0);
    for t in &r.traces {
        assert!(t.batch_rewards.iter().all(|v| *v == 3.0));
        assert!(t.mi_estimate.is_finite() && t.loss_action.is_finite() && t.loss_critic.is_finite());
    }
    assert!(r.params.values().all(|p| p.data().iter().all(|v| v.is_finite())));
}

#[test]
fn critic_phase_leaves_actor_untouched() {
    let cfg = VboConfig {
        actor_steps: 0,
        ..small()
    };
    let mut obj = quadratic();
    let mut st = VboState::new(cfg, obj.objective().bounds().clone()).unwrap();
    st.warmup(&mut obj).unwrap();
    for _ in 0..3 {
        let actor = st.action.params().clone();
        let critic = st.critic.params().clone();
        assert!(matches!(st.step(&mut obj).unwrap(), StepOutcome::Done(_)));
        assert_eq!(st.action.params().blocks(), actor.blocks());
        assert_ne!(st.critic.params().blocks(), critic.blocks());
    }
}

#[test]
fn actor_phase_leaves_critic_and_reward_head_untouched() {
    let cfg = VboConfig {
        critic_steps: 0,
        ..small()
    };
    let mut obj = quadratic();
    let mut st = VboState::new(cfg, obj.objective().bounds().clone()).unwrap();
    st.warmup(&mut obj).unwrap();
    for _ in 0..3 {
        let actor = st.action.params().clone();
        let critic = st.critic.params().clone();
        let reward = st.reward.params().clone();
        st.step(&mut obj).unwrap();
        assert_ne!(st.action.params().blocks(), actor.blocks());
        assert_eq!(st.critic.params().blocks(), critic.blocks());
        assert_eq!(st.reward.params().blocks(), reward.blocks());
    }
}

#[test]
fn zero_beta_matches_exploitation_only() {
    let base = small();
    let a = run(
        &VboConfig {
            beta: 0.0,
            ..base.clone()
        },
        &mut quadratic(),
    )
    .unwrap();
    let b = run(
        &VboConfig {
            exploration_mode: ExplorationMode::None,
            ..base
        },
        &mut quadratic(),
    )
    .unwrap();
    assert_eq!(fingerprint(&a), fingerprint(&b));
}

/// A warmed-up state and an actor context over its history.
fn warmed_state(cfg: VboConfig) -> (VboState, ActorContext) {
    let mut obj = objective("branin", None, 0.0, 0);
    let mut st = VboState::new(
        VboConfig {
            actor_steps: 0,
            ..cfg.clone()
        },
        obj.objective().bounds().clone(),
    )
    .unwrap();
    st.warmup(&mut obj).unwrap();
    for _ in 0..3 {
        st.step(&mut obj).unwrap();
    }
    let b = cfg.batch;
    let plan = PairPlan::new(b, PairingMode::AllPairs, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let sc = st.scaling().clone();
    let hist = st.history.clone();
    let (xs, ys) = hist.window(2);
    let xs: Vec<Tensor> = xs.iter().map(|x| sc.x_tensor(x)).collect();
    let ys: Vec<Tensor> = ys.iter().map(|y| sc.y_tensor(y)).collect();
    let prefix = st.critic.state(&xs, &ys, Some(&plan.pairs), None).unwrap();
    let latest = sc.y_tensor(hist.latest().unwrap().1);
    let ctx = ActorContext {
        seeds: SeedBatch::from_seed(9, b, cfg.action_net.seed_dim).values,
        latest_y: latest,
        plan,
        prefix: Some(prefix),
        gp: None,
    };
    (st, ctx)
}

fn loss_parts(st: &VboState, ctx: &ActorContext, cfg: &VboConfig) -> (f64, f64, Option<f64>) {
    let mut tape = Tape::new();
    let p = st.action.params().bind(&mut tape, true);
    let frozen = Frozen {
        critic: &st.critic,
        reward: &st.reward,
        scaling: st.scaling(),
    };
    let parts = action_net_loss(&mut tape, &st.action, &p, frozen, ctx, cfg).unwrap();
    (
        tape.value(parts.loss).item(),
        tape.value(parts.exploitation).item(),
        parts.exploration.map(|e| tape.value(e).item()),
    )
}

#[test]
fn exploration_weight_scales_with_root_beta() {
    let cfg = VboConfig { batch: 6, ..small() };
    let (st, ctx) = warmed_state(cfg.clone());
    let (l1, e1, i1) = loss_parts(
        &st,
        &ctx,
        &VboConfig {
            beta: 1.0,
            ..cfg.clone()
        },
    );
    let (l4, e4, i4) = loss_parts(
        &st,
        &ctx,
        &VboConfig {
            beta: 4.0,
            ..cfg.clone()
        },
    );
    let (l0, e0, i0) = loss_parts(
        &st,
        &ctx,
        &VboConfig {
            beta: 0.0,
            ..cfg.clone()
        },
    );
    let (i1, i4) = (i1.unwrap(), i4.unwrap());
    assert_eq!(i1, i4);
    assert_eq!(e1, e4);
    assert_eq!(e0, e1);
    assert!(i0.is_none());
    assert!((l1 - (-e1 - i1)).abs() < 1e-12);
    assert!((l4 - (-e4 - 2.0 * i4)).abs() < 1e-12);
    assert_eq!(l0, -e0);
    let (ln, _, _) = loss_parts(
        &st,
        &ctx,
        &VboConfig {
            exploration_sign: -1.0,
            ..cfg.clone()
        },
    );
    assert!((ln - (-e1 + i1)).abs() < 1e-12);

    let mut tape = Tape::new();
    let p = st.action.params().bind(&mut tape, true);
    let frozen = Frozen {
        critic: &st.critic,
        reward: &st.reward,
        scaling: st.scaling(),
    };
    assert!(action_net_loss(
        &mut tape,
        &st.action,
        &p,
        frozen,
        &ctx,
        &VboConfig { beta: -1.0, ..cfg }
    )
    .is_err());
}

#[test]
fn actor_gradient_matches_finite_differences() {
    let cfg = VboConfig { batch: 6, ..small() };
    let (mut st, ctx) = warmed_state(cfg.clone());
    let mut tape = Tape::new();
    let p = st.action.params().bind(&mut tape, true);
    let frozen = Frozen {
        critic: &st.critic,
        reward: &st.reward,
        scaling: st.scaling(),
    };
    let parts = action_net_loss(&mut tape, &st.action, &p, frozen, &ctx, &cfg).unwrap();
    assert!(parts.exploration.is_some());
    let grads = p.gradients(&tape.backward(parts.loss).unwrap()).unwrap();

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let names: Vec<String> = st.action.params().blocks().keys().cloned().collect();
    for name in names {
        let n = st.action.params().get(&name).unwrap().numel();
        for k in (0..n).step_by(n.div_ceil(6)) {
            let orig = st.action.params().get(&name).unwrap().data()[k];
            st.action.params_mut().get_mut(&name).unwrap().data_mut()[k] = orig + h;
            let up = loss_parts(&st, &ctx, &cfg).0;
            st.action.params_mut().get_mut(&name).unwrap().data_mut()[k] = orig - h;
            let down = loss_parts(&st, &ctx, &cfg).0;
            st.action.params_mut().get_mut(&name).unwrap().data_mut()[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads[&name].data()[k];
            worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-6));
        }
    }
    assert!(worst < 1e-3, "worst relative error {worst:e}");
}

#[test]
fn warmup_tightens_the_bound() {
    let cfg = VboConfig {
        warmup_steps: 40,
        batch: 32,
        ..VboConfig::default()
    };
    let mut obj = quadratic();
    let mut st = VboState::new(cfg, obj.objective().bounds().clone()).unwrap();
    let curve = st.warmup(&mut obj).unwrap();
    assert_eq!(curve.len(), 40);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    assert!(mean(&curve[30..]) > mean(&curve[..10]), "{curve:?}");
    assert!(st.history.is_empty());
}

#[test]
fn finds_the_quadratic_minimum() {
    let cfg = VboConfig {
        iterations: 30,
        batch: 32,
        ..VboConfig::default()
    };
    let r = run(&cfg, &mut quadratic()).unwrap();
    assert!(r.best_x[0].abs() <= 0.5, "best_x {:?}", r.best_x);
    let first = r.traces[0].mean_reward;
    assert!(r.final_reward(5) > first);
}

#[test]
fn ablation_modes_run() {
    for (ex, er) in [
        (ExploitationMode::BatchMeanConstant, ExplorationMode::DvMi),
        (ExploitationMode::GpMean, ExplorationMode::DvMi),
        (ExploitationMode::RewardHead, ExplorationMode::GpSigma),
        (ExploitationMode::GpMean, ExplorationMode::GpSigma),
    ] {
        let cfg = VboConfig {
            exploitation_mode: ex,
            exploration_mode: er,
            ..small()
        };
        let r = run(&cfg, &mut objective("branin", None, 0.0, 0)).unwrap();
        assert_eq!(r.evaluations, cfg.planned_evaluations());
        assert!(r.traces.iter().all(|t| t.loss_action.is_finite()), "{ex:?} {er:?}");
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    let mut obj = quadratic();
    for cfg in [
        VboConfig { batch: 1, ..small() },
        VboConfig { beta: -0.5, ..small() },
        VboConfig {
            exploration_sign: 0.5,
            ..small()
        },
        VboConfig {
            lr_action: 0.0,
            ..small()
        },
        VboConfig {
            history_window: 0,
            ..small()
        },
    ] {
        assert!(run(&cfg, &mut obj).is_err());
    }
}
