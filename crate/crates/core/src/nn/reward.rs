use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::action::Bounds;
use super::params::{dense, init_dense, layer_names, BoundParams, ParamSet};
use crate::autodiff::{AdamConfig, MacCounter, Phase, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardHeadConfig {
    pub hidden_dims: Vec<usize>,
    /// Minibatch regression steps per critic update.
    pub steps_per_update: usize,
    pub minibatch: usize,
}

impl Default for RewardHeadConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![32, 32],
            steps_per_update: 20,
            minibatch: 128,
        }
    }
}

/// Small `tanh` MLP regressing observations on inputs.
///
/// Inputs are rescaled from the box to `[-1, 1]` inside the network. The
/// output layer starts at zero so an untrained head predicts `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardHead {
    config: RewardHeadConfig,
    scale: Vec<f64>,
    shift: Vec<f64>,
    params: ParamSet,
}

impl RewardHead {
    pub fn new<R: Rng + ?Sized>(config: RewardHeadConfig, bounds: &Bounds, rng: &mut R) -> Result<Self> {
        if config.hidden_dims.contains(&0) || config.minibatch == 0 {
            return Err(Error::invalid("reward head widths and minibatch must be positive"));
        }
        let mut widths = vec![bounds.dim()];
        widths.extend(&config.hidden_dims);
        widths.push(1);
        let names = layer_names(widths.len() - 1);
        let mut params = ParamSet::new();
        for (name, w) in names.iter().zip(widths.windows(2)) {
            init_dense(&mut params, rng, name, w[0], w[1]);
        }
        let last = names.last().expect("at least one layer");
        params.insert(format!("{last}.w"), Tensor::zeros(&[widths[widths.len() - 2], 1]));
        let scale: Vec<f64> = bounds.half_width().iter().map(|h| 1.0 / h).collect();
        let shift = bounds.mid().iter().zip(&scale).map(|(m, s)| -m * s).collect();
        Ok(Self {
            config,
            scale,
            shift,
            params,
        })
    }

    pub fn config(&self) -> &RewardHeadConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Predictions `B × 1` for inputs `x: B × d`.
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var> {
        let d = self.scale.len();
        let shape = tape.value(x).shape().to_vec();
        if shape.len() != 2 || shape[1] != d {
            return Err(Error::Shape {
                op: "reward_head",
                lhs: shape,
                rhs: vec![d],
            });
        }
        let names = layer_names(self.config.hidden_dims.len() + 1);
        let mut h = tape.col_affine(x, &self.scale, &self.shift)?;
        for (i, name) in names.iter().enumerate() {
            h = dense(tape, p, name, h)?;
            if i + 1 < names.len() {
                h = tape.tanh(h)?;
            }
        }
        Ok(h)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, &p, xv)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// One Adam step on the mean squared error over `rows` of `(x, y)`.
    /// Returns the loss before the step.
    /// Work is charged to [`Phase::CriticUpdate`] when a counter is given.
    pub fn train_step(
        &mut self,
        x: &Tensor,
        y: &[f64],
        rows: &[usize],
        lr: f64,
        adam: &AdamConfig,
        counter: Option<&MacCounter>,
    ) -> Result<f64> {
        let d = x.cols();
        let xs: Vec<f64> = rows.iter().flat_map(|&i| x.row(i).iter().copied()).collect();
        let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let mut tape = Tape::counted(counter, Phase::CriticUpdate);
        let p = self.params.bind(&mut tape, true);
        let xv = tape.constant(Tensor::new(vec![rows.len(), d], xs)?);
        let target = tape.constant(Tensor::new(vec![rows.len(), 1], ys)?);
        let pred = self.forward(&mut tape, &p, xv)?;
        let err = tape.sub(pred, target)?;
        let sq = tape.mul(err, err)?;
        let loss = tape.mean(sq)?;
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?;
        self.params.adam_update(&p.gradients(&grads)?, lr, adam)?;
        Ok(value)
    }

    /// `steps_per_update` minibatch steps over the whole data set.
    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        x: &Tensor,
        y: &[f64],
        lr: f64,
        adam: &AdamConfig,
        rng: &mut R,
        counter: Option<&MacCounter>,
    ) -> Result<f64> {
        let n = x.rows();
        if n == 0 || y.len() != n {
            return Err(Error::invalid("reward head needs matching, non-empty data"));
        }
        let m = self.config.minibatch.min(n);
        let mut last = 0.0;
        for _ in 0..self.config.steps_per_update {
            let rows = sample(rng, n, m).into_vec();
            last = self.train_step(x, y, &rows, lr, adam, counter)?;
        }
        Ok(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn untrained_head_predicts_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = Bounds::new(&[(-1.0, 3.0), (0.0, 1.0)]).unwrap();
        let head = RewardHead::new(RewardHeadConfig::default(), &b, &mut rng).unwrap();
        let x = Tensor::from_fn(&[7, 2], |k| k as f64 * 0.1);
        assert_eq!(head.predict(&x).unwrap(), vec![0.0; 7]);
    }

    #[test]
    fn fits_a_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = Bounds::new(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let mut head = RewardHead::new(RewardHeadConfig::default(), &b, &mut rng).unwrap();
        let x = Tensor::from_fn(&[64, 2], |_| rng.random::<f64>());
        let y = vec![0.7; 64];
        for _ in 0..20 {
            head.fit(&x, &y, 0.01, &AdamConfig::default(), &mut rng, None).unwrap();
        }
        let test = Tensor::from_fn(&[16, 2], |_| rng.random::<f64>());
        for p in head.predict(&test).unwrap() {
            assert!((p - 0.7).abs() < 1e-2, "{p}");
        }
    }

    #[test]
    fn rejects_wrong_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = Bounds::new(&[(0.0, 1.0)]).unwrap();
        let head = RewardHead::new(RewardHeadConfig::default(), &b, &mut rng).unwrap();
        assert!(head.predict(&Tensor::zeros(&[3, 2])).is_err());
    }
}
