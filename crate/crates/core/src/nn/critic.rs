use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{dense, glorot, init_dense, BoundParams, ParamSet};
use crate::autodiff::{MacCounter, Phase, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Recurrent cell used by the critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Lstm,
    /// Plain `tanh` recurrence.
    Elman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticConfig {
    /// Recurrent state size `H`.
    pub hidden_dim: usize,
    /// Width of the first dense layer; the second maps to the scalar score.
    pub dense_hidden: usize,
    pub cell: CellKind,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 16,
            dense_hidden: 16,
            cell: CellKind::Lstm,
        }
    }
}

/// Which `(X⁽ⁱ⁾, Y⁽ʲ⁾)` combinations a forward pass scores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairIndex {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
}

impl PairIndex {
    /// Every `(i, j)` with `i` major: entry `i·B + j` pairs `X⁽ⁱ⁾` with `Y⁽ʲ⁾`.
    pub fn all_pairs(batch: usize) -> Self {
        Self {
            x: (0..batch).flat_map(|i| std::iter::repeat(i).take(batch)).collect(),
            y: (0..batch).flat_map(|_| 0..batch).collect(),
        }
    }

    /// `X⁽ⁱ⁾` with `Y⁽π(i)⁾`.
    pub fn permuted(perm: &[usize]) -> Self {
        Self {
            x: (0..perm.len()).collect(),
            y: perm.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Recurrent state recorded on a tape. `c` is unused by the Elman cell.
#[derive(Debug, Clone, Copy)]
pub struct CellState {
    pub h: Var,
    pub c: Var,
}

/// The critic `D_θ`: a recurrent pass over `concat(x_τ, y_τ)` followed by two
/// dense layers producing one score per trajectory.
///
/// Trajectories are stored time-major: `xs[τ]` is the `B × d` batch at step
/// `τ` and `ys[τ]` the matching `B × 1` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    config: CriticConfig,
    x_dim: usize,
    params: ParamSet,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(config: CriticConfig, x_dim: usize, rng: &mut R) -> Result<Self> {
        if config.hidden_dim == 0 || config.dense_hidden == 0 || x_dim == 0 {
            return Err(Error::invalid("critic dimensions must be positive"));
        }
        let h = config.hidden_dim;
        let fan_in = x_dim + 1 + h;
        let mut params = ParamSet::new();
        match config.cell {
            CellKind::Lstm => {
                params.insert("cell.w", glorot(rng, fan_in, 4 * h));
                // Forget-gate bias of one keeps early gradients alive.
                params.insert(
                    "cell.b",
                    Tensor::from_fn(&[4 * h], |k| if (h..2 * h).contains(&k) { 1.0 } else { 0.0 }),
                );
            }
            CellKind::Elman => {
                params.insert("cell.w", glorot(rng, fan_in, h));
                params.insert("cell.b", Tensor::zeros(&[h]));
            }
        }
        init_dense(&mut params, rng, "d0", h, config.dense_hidden);
        init_dense(&mut params, rng, "d1", config.dense_hidden, 1);
        Ok(Self { config, x_dim, params })
    }

    pub fn config(&self) -> &CriticConfig {
        &self.config
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Zero state for `n` rows.
    pub fn zero_state(&self, tape: &mut Tape, n: usize) -> CellState {
        let h = tape.constant(Tensor::zeros(&[n, self.config.hidden_dim]));
        let c = tape.constant(Tensor::zeros(&[n, self.config.hidden_dim]));
        CellState { h, c }
    }

    fn check_steps(&self, tape: &Tape, xs: &[Var], ys: &[Var]) -> Result<usize> {
        if xs.is_empty() {
            return Err(Error::invalid("critic needs at least one timestep"));
        }
        if xs.len() != ys.len() {
            return Err(Error::Shape {
                op: "critic",
                lhs: vec![xs.len()],
                rhs: vec![ys.len()],
            });
        }
        let b = tape.value(xs[0]).rows();
        for (x, y) in xs.iter().zip(ys) {
            let (xv, yv) = (tape.value(*x), tape.value(*y));
            if xv.shape() != [b, self.x_dim] || yv.shape() != [b, 1] {
                return Err(Error::Shape {
                    op: "critic",
                    lhs: xv.shape().to_vec(),
                    rhs: yv.shape().to_vec(),
                });
            }
            if !xv.is_finite() || !yv.is_finite() {
                return Err(Error::NonFinite("critic input".into()));
            }
        }
        Ok(b)
    }

    /// One recurrent step on already-paired rows.
    pub fn step(&self, tape: &mut Tape, p: &BoundParams, x: Var, y: Var, st: CellState) -> Result<CellState> {
        let (w, b) = (p.get("cell.w"), p.get("cell.b"));
        match self.config.cell {
            CellKind::Lstm => {
                let xin = tape.concat_cols(&[x, y])?;
                let hc = tape.lstm_cell(xin, st.h, st.c, w, b)?;
                let h = self.config.hidden_dim;
                Ok(CellState {
                    h: tape.slice_cols(hc, 0, h)?,
                    c: tape.slice_cols(hc, h, 2 * h)?,
                })
            }
            CellKind::Elman => {
                let inp = tape.concat_cols(&[x, y, st.h])?;
                let z = tape.matmul(inp, w)?;
                let z = tape.add_row(z, b)?;
                let h = tape.tanh(z)?;
                Ok(CellState { h, c: st.c })
            }
        }
    }

    /// Dense readout from the final hidden state to `N × 1` scores.
    pub fn readout(&self, tape: &mut Tape, p: &BoundParams, h: Var) -> Result<Var> {
        let z = dense(tape, p, "d0", h)?;
        let z = tape.tanh(z)?;
        dense(tape, p, "d1", z)
    }

    /// Advance `init` over the given steps, pairing rows through `pairs`
    /// (the joint pairing when `None`).
    pub fn run(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        xs: &[Var],
        ys: &[Var],
        pairs: Option<&PairIndex>,
        init: Option<CellState>,
    ) -> Result<CellState> {
        let b = self.check_steps(tape, xs, ys)?;
        let n = pairs.map_or(b, PairIndex::len);
        let mut st = match init {
            Some(s) => s,
            None => self.zero_state(tape, n),
        };
        for (&x, &y) in xs.iter().zip(ys) {
            let (xp, yp) = match pairs {
                Some(idx) => (tape.gather_rows(x, &idx.x)?, tape.gather_rows(y, &idx.y)?),
                None => (x, y),
            };
            st = self.step(tape, p, xp, yp, st)?;
        }
        Ok(st)
    }

    /// Scores `N × 1` for each requested pairing of whole trajectories.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        xs: &[Var],
        ys: &[Var],
        pairs: Option<&PairIndex>,
    ) -> Result<Var> {
        let st = self.run(tape, p, xs, ys, pairs, None)?;
        self.readout(tape, p, st.h)
    }

    /// Final recurrent state as plain tensors, without keeping a graph.
    /// Work is charged to [`Phase::Evaluation`] when a counter is given.
    pub fn state(
        &self,
        xs: &[Tensor],
        ys: &[Tensor],
        pairs: Option<&PairIndex>,
        counter: Option<&MacCounter>,
    ) -> Result<(Tensor, Tensor)> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::invalid("critic needs matching, non-empty step lists"));
        }
        let n = pairs.map_or(xs[0].rows(), PairIndex::len);
        let mut h = Tensor::zeros(&[n, self.config.hidden_dim]);
        let mut c = h.clone();
        for (x, y) in xs.iter().zip(ys) {
            let mut tape = Tape::counted(counter, Phase::Evaluation);
            let p = self.params.bind(&mut tape, false);
            let xv = tape.constant(x.clone());
            let yv = tape.constant(y.clone());
            let init = CellState {
                h: tape.constant(h),
                c: tape.constant(c),
            };
            let st = self.run(&mut tape, &p, &[xv], &[yv], pairs, Some(init))?;
            h = tape.value(st.h).clone();
            c = tape.value(st.c).clone();
        }
        Ok((h, c))
    }

    /// Joint scores, one per trajectory, without gradients.
    pub fn score(&self, xs: &[Tensor], ys: &[Tensor]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let xv: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let yv: Vec<Var> = ys.iter().map(|y| tape.constant(y.clone())).collect();
        let s = self.forward(&mut tape, &p, &xv, &yv, None)?;
        Ok(tape.value(s).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_steps(rng: &mut ChaCha8Rng, t: usize, b: usize, d: usize) -> (Vec<Tensor>, Vec<Tensor>) {
        let xs = (0..t)
            .map(|_| Tensor::from_fn(&[b, d], |_| rng.sample(StandardNormal)))
            .collect();
        let ys = (0..t)
            .map(|_| Tensor::from_fn(&[b, 1], |_| rng.sample(StandardNormal)))
            .collect();
        (xs, ys)
    }

    #[test]
    fn single_step_is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let critic = Critic::new(CriticConfig::default(), 2, &mut rng).unwrap();
        let (xs, ys) = random_steps(&mut rng, 1, 4, 2);
        let s = critic.score(&xs, &ys).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn batch_permutation_permutes_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let critic = Critic::new(CriticConfig::default(), 3, &mut rng).unwrap();
        let (xs, ys) = random_steps(&mut rng, 4, 5, 3);
        let base = critic.score(&xs, &ys).unwrap();
        let perm = [3, 0, 4, 1, 2];
        let permute = |t: &Tensor| {
            let rows: Vec<Vec<f64>> = perm.iter().map(|&i| t.row(i).to_vec()).collect();
            Tensor::from_rows(&rows).unwrap()
        };
        let xs2: Vec<Tensor> = xs.iter().map(permute).collect();
        let ys2: Vec<Tensor> = ys.iter().map(permute).collect();
        let s2 = critic.score(&xs2, &ys2).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(s2[k], base[i]);
        }
    }

    #[test]
    fn identical_trajectories_score_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let critic = Critic::new(CriticConfig::default(), 1, &mut rng).unwrap();
        let xs = vec![Tensor::filled(&[3, 1], 0.4); 3];
        let ys = vec![Tensor::filled(&[3, 1], -1.0); 3];
        let s = critic.score(&xs, &ys).unwrap();
        assert_eq!(s[0], s[1]);
        assert_eq!(s[1], s[2]);
    }

    #[test]
    fn cached_state_matches_full_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for cell in [CellKind::Lstm, CellKind::Elman] {
            let cfg = CriticConfig {
                cell,
                ..CriticConfig::default()
            };
            let critic = Critic::new(cfg, 2, &mut rng).unwrap();
            let (xs, ys) = random_steps(&mut rng, 5, 3, 2);
            let pairs = PairIndex::all_pairs(3);

            let mut tape = Tape::new();
            let p = critic.params().bind(&mut tape, false);
            let xv: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
            let yv: Vec<Var> = ys.iter().map(|y| tape.constant(y.clone())).collect();
            let full = critic.forward(&mut tape, &p, &xv, &yv, Some(&pairs)).unwrap();

            let (h, c) = critic.state(&xs[..4], &ys[..4], Some(&pairs), None).unwrap();
            let init = CellState {
                h: tape.constant(h),
                c: tape.constant(c),
            };
            let st = critic
                .run(&mut tape, &p, &xv[4..], &yv[4..], Some(&pairs), Some(init))
                .unwrap();
            let tail = critic.readout(&mut tape, &p, st.h).unwrap();
            assert_eq!(tape.value(full), tape.value(tail));
        }
    }

    #[test]
    fn rejects_empty_and_nan() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let critic = Critic::new(CriticConfig::default(), 1, &mut rng).unwrap();
        assert!(critic.score(&[], &[]).is_err());
        let xs = vec![Tensor::new(vec![2, 1], vec![0.0, f64::NAN]).unwrap()];
        let ys = vec![Tensor::zeros(&[2, 1])];
        assert!(critic.score(&xs, &ys).is_err());
    }
}
