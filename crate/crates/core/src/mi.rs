//! Donsker–Varadhan mutual-information bound and a standalone estimator.
//!
//! `Î = mean(T(joint)) − log mean(exp(T(marginal)))`, in nats. Marginal pairs
//! come either from every `(X⁽ⁱ⁾, Y⁽ʲ⁾)` combination (including `i = j`) or
//! from a derangement of the batch rows.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{log_mean_exp, AdamConfig, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{glorot_matrix, BoundParams, Critic, PairIndex, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    #[default]
    AllPairs,
    Derangement,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub value: f64,
    pub term_joint: f64,
    pub term_marginal: f64,
    pub pairing_mode: PairingMode,
}

/// `Y` with rows reordered by a derangement `perm`: row `i` holds `Y⁽ᵖᵉʳᵐ⁽ⁱ⁾⁾`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuffledBatch {
    pub y: Vec<Tensor>,
    pub perm: Vec<usize>,
}

/// Uniformly random permutation of `0..n` without fixed points.
pub fn derangement<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::invalid(format!("derangement needs at least 2 rows, got {n}")));
    }
    let mut p: Vec<usize> = (0..n).collect();
    // Rejection sampling accepts with probability about 1/e.
    loop {
        p.shuffle(rng);
        if p.iter().enumerate().all(|(i, &v)| i != v) {
            return Ok(p);
        }
    }
}

/// Apply one derangement to the rows of every timestep of `ys`.
pub fn shuffle_marginals<R: Rng + ?Sized>(ys: &[Tensor], rng: &mut R) -> Result<ShuffledBatch> {
    let b = ys.first().map_or(0, Tensor::rows);
    let perm = derangement(b, rng)?;
    let y = ys
        .iter()
        .map(|t| Tensor::new(t.shape().to_vec(), select(t, &perm)))
        .collect::<Result<_>>()?;
    Ok(ShuffledBatch { y, perm })
}

/// DV bound from plain score arrays. In [`PairingMode::AllPairs`] `cross`
/// holds `B²` scores; in derangement mode it holds `B`.
pub fn dv_bound(joint: &[f64], cross: &[f64], mode: PairingMode) -> Result<MiEstimate> {
    let b = joint.len();
    if b == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let expected = match mode {
        PairingMode::AllPairs => b * b,
        PairingMode::Derangement => b,
    };
    if cross.len() != expected {
        return Err(Error::Shape {
            op: "dv_bound",
            lhs: vec![b],
            rhs: vec![cross.len()],
        });
    }
    let term_joint = joint.iter().sum::<f64>() / b as f64;
    let term_marginal = log_mean_exp(cross);
    Ok(MiEstimate {
        value: term_joint - term_marginal,
        term_joint,
        term_marginal,
        pairing_mode: mode,
    })
}

/// DV terms recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct DvTerms {
    pub value: Var,
    pub joint: Var,
    pub marginal: Var,
}

impl DvTerms {
    pub fn estimate(&self, tape: &Tape, mode: PairingMode) -> MiEstimate {
        MiEstimate {
            value: tape.value(self.value).item(),
            term_joint: tape.value(self.joint).item(),
            term_marginal: tape.value(self.marginal).item(),
            pairing_mode: mode,
        }
    }
}

pub fn dv_on_tape(tape: &mut Tape, joint_scores: Var, cross_scores: Var) -> Result<DvTerms> {
    let joint = tape.mean(joint_scores)?;
    let marginal = tape.log_mean_exp(cross_scores)?;
    let value = tape.sub(joint, marginal)?;
    Ok(DvTerms { value, joint, marginal })
}

/// Row pairing for a batch of `b` trajectories, and where the joint and
/// marginal scores sit in the resulting score column.
#[derive(Debug, Clone)]
pub struct PairPlan {
    pub pairs: PairIndex,
    pub joint_rows: Vec<usize>,
    pub cross_rows: Vec<usize>,
}

impl PairPlan {
    pub fn new<R: Rng + ?Sized>(b: usize, mode: PairingMode, rng: &mut R) -> Result<Self> {
        if b < 2 {
            return Err(Error::invalid(format!("MI bound needs a batch of at least 2, got {b}")));
        }
        Ok(match mode {
            PairingMode::AllPairs => Self {
                pairs: PairIndex::all_pairs(b),
                joint_rows: (0..b).map(|i| i * b + i).collect(),
                cross_rows: (0..b * b).collect(),
            },
            PairingMode::Derangement => {
                let perm = derangement(b, rng)?;
                let mut x: Vec<usize> = (0..b).collect();
                x.extend(0..b);
                let mut y: Vec<usize> = (0..b).collect();
                y.extend(&perm);
                Self {
                    pairs: PairIndex { x, y },
                    joint_rows: (0..b).collect(),
                    cross_rows: (b..2 * b).collect(),
                }
            }
        })
    }

    /// Split a score column into DV terms.
    pub fn dv(&self, tape: &mut Tape, scores: Var) -> Result<DvTerms> {
        let joint = tape.gather_rows(scores, &self.joint_rows)?;
        let cross = if self.cross_rows.len() == tape.value(scores).rows() {
            scores
        } else {
            tape.gather_rows(scores, &self.cross_rows)?
        };
        dv_on_tape(tape, joint, cross)
    }
}

/// DV bound of the recurrent critic over time-major trajectories.
pub fn critic_dv<R: Rng + ?Sized>(
    tape: &mut Tape,
    critic: &Critic,
    p: &BoundParams,
    xs: &[Var],
    ys: &[Var],
    mode: PairingMode,
    rng: &mut R,
) -> Result<DvTerms> {
    let b = xs.first().map_or(0, |x| tape.value(*x).rows());
    let plan = PairPlan::new(b, mode, rng)?;
    let scores = critic.forward(tape, p, xs, ys, Some(&plan.pairs))?;
    plan.dv(tape, scores)
}

/// Critic loss `L_D = −Î` and the estimate, without updating anything.
pub fn critic_loss<R: Rng + ?Sized>(
    critic: &Critic,
    xs: &[Tensor],
    ys: &[Tensor],
    mode: PairingMode,
    rng: &mut R,
) -> Result<(f64, MiEstimate)> {
    let mut tape = Tape::new();
    let p = critic.params().bind(&mut tape, false);
    let xv: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
    let yv: Vec<Var> = ys.iter().map(|y| tape.constant(y.clone())).collect();
    let dv = critic_dv(&mut tape, critic, &p, &xv, &yv, mode, rng)?;
    let est = dv.estimate(&tape, mode);
    Ok((-est.value, est))
}

/// Settings for [`estimate_mi`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiEstimatorConfig {
    pub hidden: usize,
    pub lr: f64,
    pub batch: usize,
    pub max_steps: usize,
    pub eval_every: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    pub holdout_fraction: f64,
    pub pairing: PairingMode,
    pub seed: u64,
}

impl Default for MiEstimatorConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            lr: 5e-3,
            batch: 64,
            max_steps: 5000,
            eval_every: 100,
            patience: 4,
            holdout_fraction: 0.25,
            pairing: PairingMode::AllPairs,
            seed: 0,
        }
    }
}

/// Estimates above this on low-dimensional data indicate a diverged critic.
pub const DIVERGENCE_NATS: f64 = 10.0;

/// Minimum number of paired samples accepted by [`estimate_mi`].
pub const MIN_SAMPLES: usize = 256;

/// Result of [`estimate_mi`].
#[derive(Debug, Clone, PartialEq)]
pub struct MiFit {
    pub estimate: MiEstimate,
    pub steps: usize,
    /// Held-out estimates at each evaluation.
    pub curve: Vec<f64>,
}

/// `T(x, y) = w₂ᵀ tanh(x·Wx + y·Wy + b₁) + b₂`.
///
/// The first layer is separable, so all `B²` pairs cost two `B`-row products
/// plus row gathers.
struct PairCritic {
    params: ParamSet,
}

impl PairCritic {
    fn new<R: Rng + ?Sized>(dx: usize, dy: usize, hidden: usize, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let w = glorot_matrix(rng, dx + dy, hidden);
        let (wx, wy) = w.data().split_at(dx * hidden);
        params.insert("wx", Tensor::new(vec![dx, hidden], wx.to_vec()).expect("shape"));
        params.insert("wy", Tensor::new(vec![dy, hidden], wy.to_vec()).expect("shape"));
        params.insert("b1", Tensor::zeros(&[hidden]));
        params.insert("w2", glorot_matrix(rng, hidden, 1));
        params.insert("b2", Tensor::zeros(&[1]));
        Self { params }
    }

    fn scores(&self, tape: &mut Tape, p: &BoundParams, x: Var, y: Var, pairs: &PairIndex) -> Result<Var> {
        let ax = tape.matmul(x, p.get("wx"))?;
        let ay = tape.matmul(y, p.get("wy"))?;
        let gx = tape.gather_rows(ax, &pairs.x)?;
        let gy = tape.gather_rows(ay, &pairs.y)?;
        let s = tape.add(gx, gy)?;
        let s = tape.add_row(s, p.get("b1"))?;
        let h = tape.tanh(s)?;
        let o = tape.matmul(h, p.get("w2"))?;
        tape.add_row(o, p.get("b2"))
    }

    fn estimate<R: Rng + ?Sized>(&self, x: &Tensor, y: &Tensor, mode: PairingMode, rng: &mut R) -> Result<MiEstimate> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let plan = PairPlan::new(x.rows(), mode, rng)?;
        let s = self.scores(&mut tape, &p, xv, yv, &plan.pairs)?;
        let dv = plan.dv(&mut tape, s)?;
        Ok(dv.estimate(&tape, mode))
    }
}

fn select(t: &Tensor, rows: &[usize]) -> Vec<f64> {
    rows.iter().flat_map(|&i| t.row(i).iter().copied()).collect()
}

fn zscore(t: &Tensor, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let c = t.cols();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; c];
    for &i in rows {
        for (m, v) in mean.iter_mut().zip(t.row(i)) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; c];
    for &i in rows {
        for ((s, v), m) in sd.iter_mut().zip(t.row(i)).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    let sd = sd.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
    (mean, sd)
}

fn take_rows(t: &Tensor, rows: &[usize], mean: &[f64], sd: &[f64]) -> Tensor {
    let c = t.cols();
    let data = rows
        .iter()
        .flat_map(|&i| t.row(i).iter().zip(mean).zip(sd).map(|((v, m), s)| (v - m) / s))
        .collect();
    Tensor::new(vec![rows.len(), c], data).expect("row subset")
}

/// Train a fresh pair critic on `(x, y)` samples (rows are pairs) and report
/// the held-out DV estimate at the best evaluation.
///
/// Inputs are z-scored with training statistics. `cfg.pairing` selects the
/// marginal pairs used for training; held-out estimates always use all pairs.
/// Training stops after `patience` evaluations without improvement.
pub fn estimate_mi(x: &Tensor, y: &Tensor, cfg: &MiEstimatorConfig) -> Result<MiFit> {
    let n = x.rows();
    if n != y.rows() {
        return Err(Error::Shape {
            op: "estimate_mi",
            lhs: x.shape().to_vec(),
            rhs: y.shape().to_vec(),
        });
    }
    if n < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_SAMPLES} paired samples, got {n}"
        )));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::NonFinite("MI samples".into()));
    }
    if !(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0) || cfg.batch < 2 || cfg.eval_every == 0 {
        return Err(Error::invalid(
            "estimator needs 0 < holdout_fraction < 1, batch ≥ 2, eval_every ≥ 1",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_hold = ((n as f64) * cfg.holdout_fraction).round().max(2.0) as usize;
    let (hold, train) = order.split_at(n_hold);
    let (mx, sx) = zscore(x, train);
    let (my, sy) = zscore(y, train);
    let xt = take_rows(x, train, &mx, &sx);
    let yt = take_rows(y, train, &my, &sy);
    let xh = take_rows(x, hold, &mx, &sx);
    let yh = take_rows(y, hold, &my, &sy);

    let mut critic = PairCritic::new(x.cols(), y.cols(), cfg.hidden, &mut rng);
    let adam = AdamConfig::default();
    let batch = cfg.batch.min(train.len());
    let mut best: Option<(MiEstimate, ParamSet)> = None;
    let mut since_best = 0;
    let mut curve = Vec::new();
    let mut idx: Vec<usize> = (0..train.len()).collect();
    let mut cursor = idx.len();
    let mut steps = 0;

    while steps < cfg.max_steps {
        if cursor + batch > idx.len() {
            idx.shuffle(&mut rng);
            cursor = 0;
        }
        let rows = &idx[cursor..cursor + batch];
        cursor += batch;
        let xb = Tensor::new(vec![batch, xt.cols()], select(&xt, rows))?;
        let yb = Tensor::new(vec![batch, yt.cols()], select(&yt, rows))?;

        let mut tape = Tape::new();
        let p = critic.params.bind(&mut tape, true);
        let xv = tape.constant(xb);
        let yv = tape.constant(yb);
        let plan = PairPlan::new(batch, cfg.pairing, &mut rng)?;
        let s = critic.scores(&mut tape, &p, xv, yv, &plan.pairs)?;
        let dv = plan.dv(&mut tape, s)?;
        let loss = tape.neg(dv.value)?;
        let grads = tape.backward(loss)?;
        critic.params.adam_update(&p.gradients(&grads)?, cfg.lr, &adam)?;
        steps += 1;

        if steps % cfg.eval_every == 0 || steps == cfg.max_steps {
            let est = critic.estimate(&xh, &yh, PairingMode::AllPairs, &mut rng)?;
            if !est.value.is_finite() || est.value > DIVERGENCE_NATS {
                return Err(Error::TrainingDiverged(est.value));
            }
            curve.push(est.value);
            if best.as_ref().map_or(true, |(b, _)| est.value > b.value) {
                best = Some((est, critic.params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
    }
    let (estimate, _) = best.ok_or_else(|| Error::invalid("no evaluation was run"))?;
    Ok(MiFit { estimate, steps, curve })
}
