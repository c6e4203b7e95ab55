use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::params::{dense, init_dense, layer_names, Activation, BoundParams, ParamSet};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionNetConfig {
    pub seed_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
}

impl Default for ActionNetConfig {
    fn default() -> Self {
        Self {
            seed_dim: 8,
            hidden_dims: vec![64, 64],
            activation: Activation::Tanh,
        }
    }
}

/// A `B × seed_dim` standard-normal draw and the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedBatch {
    pub values: Tensor,
    pub rng_seed: u64,
}

impl SeedBatch {
    pub fn sample<R: RngCore + ?Sized>(rng: &mut R, batch: usize, seed_dim: usize) -> Self {
        Self::from_seed(rng.next_u64(), batch, seed_dim)
    }

    pub fn from_seed(rng_seed: u64, batch: usize, seed_dim: usize) -> Self {
        let mut r = ChaCha8Rng::seed_from_u64(rng_seed);
        let values = Tensor::from_fn(&[batch, seed_dim], |_| r.sample(StandardNormal));
        Self { values, rng_seed }
    }

    pub fn batch(&self) -> usize {
        self.values.rows()
    }
}

/// Per-dimension box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    pub fn new(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("bounds must have at least one dimension"));
        }
        for (j, &(lo, hi)) in pairs.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!(
                    "dimension {j}: need finite lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self {
            lo: pairs.iter().map(|p| p.0).collect(),
            hi: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn mid(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn half_width(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (h - l)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.lo.iter().copied().zip(self.hi.iter().copied()).collect()
    }
}

/// The action network `E_φ`: seeds through an MLP, squashed into the box.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionNet {
    config: ActionNetConfig,
    bounds: Bounds,
    params: ParamSet,
}

impl ActionNet {
    pub fn new<R: Rng + ?Sized>(config: ActionNetConfig, bounds: Bounds, rng: &mut R) -> Result<Self> {
        if config.seed_dim == 0 || config.hidden_dims.is_empty() || config.hidden_dims.contains(&0) {
            return Err(Error::invalid(
                "action net needs seed_dim > 0 and non-empty positive hidden_dims",
            ));
        }
        let mut params = ParamSet::new();
        let mut widths = vec![config.seed_dim];
        widths.extend(&config.hidden_dims);
        widths.push(bounds.dim());
        for (name, w) in layer_names(widths.len() - 1).iter().zip(widths.windows(2)) {
            init_dense(&mut params, rng, name, w[0], w[1]);
        }
        Ok(Self { config, bounds, params })
    }

    pub fn config(&self) -> &ActionNetConfig {
        &self.config
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn num_layers(&self) -> usize {
        self.config.hidden_dims.len() + 1
    }

    /// Differentiable actions `B × d` for the seed matrix `seeds`.
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, seeds: Var) -> Result<Var> {
        if !tape.value(seeds).is_finite() {
            return Err(Error::NonFinite("action-net seeds".into()));
        }
        let names = layer_names(self.num_layers());
        let mut h = seeds;
        for (i, name) in names.iter().enumerate() {
            h = dense(tape, p, name, h)?;
            if i + 1 < names.len() {
                h = self.config.activation.apply(tape, h)?;
            }
        }
        let squashed = tape.tanh(h)?;
        tape.col_affine(squashed, &self.bounds.half_width(), &self.bounds.mid())
    }

    /// Actions without recording gradients.
    pub fn sample(&self, seeds: &SeedBatch) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let s = tape.constant(seeds.values.clone());
        let out = self.forward(&mut tape, &p, s)?;
        let mut x = tape.value(out).clone();
        // tanh saturates to ±1 in floating point; keep results inside the box.
        let d = self.bounds.dim();
        for (k, v) in x.data_mut().iter_mut().enumerate() {
            *v = v.clamp(self.bounds.lo[k % d], self.bounds.hi[k % d]);
        }
        Ok(x)
    }
}
