use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::autodiff::{adam_step, AdamConfig, AdamState, Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Named parameter blocks of one network together with their Adam moments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: BTreeMap<String, Tensor>,
    adam: BTreeMap<String, AdamState>,
}

/// Parameter blocks recorded on a tape for one forward pass.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Var {
        self.vars[name]
    }

    /// Collect gradients for every bound block.
    pub fn gradients(&self, grads: &Gradients) -> Result<BTreeMap<String, Tensor>> {
        self.vars.iter().map(|(k, &v)| Ok((k.clone(), grads.get(v)?))).collect()
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        self.adam.remove(&name);
        self.params.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn blocks(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn adam_state(&self, name: &str) -> Option<&AdamState> {
        self.adam.get(name)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Record every block on `tape`, as trainable leaves or as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|(k, t)| {
                let v = if trainable {
                    tape.leaf(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (k.clone(), v)
            })
            .collect();
        BoundParams { vars }
    }

    pub fn adam_update(&mut self, grads: &BTreeMap<String, Tensor>, lr: f64, cfg: &AdamConfig) -> Result<()> {
        adam_step(&mut self.params, grads, &mut self.adam, lr, cfg)
    }

    /// Replace block values from a checkpoint; names and shapes must match.
    pub fn load(&mut self, arrays: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, t) in &self.params {
            let src = arrays
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing block `{name}`")))?;
            if src.shape() != t.shape() {
                return Err(Error::Shape {
                    op: "load",
                    lhs: t.shape().to_vec(),
                    rhs: src.shape().to_vec(),
                });
            }
        }
        for (name, t) in self.params.iter_mut() {
            *t = arrays[name].clone();
        }
        self.adam.clear();
        Ok(())
    }
}

/// Glorot-uniform `fan_in × fan_out` weight matrix.
pub(crate) fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    Tensor::from_fn(&[fan_in, fan_out], |_| dist.sample(rng))
}

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub(crate) fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
        }
    }
}

/// `x · W + b` for blocks `{prefix}.w` and `{prefix}.b`.
pub(crate) fn dense(tape: &mut Tape, p: &BoundParams, prefix: &str, x: Var) -> Result<Var> {
    let xw = tape.matmul(x, p.get(&format!("{prefix}.w")))?;
    tape.add_row(xw, p.get(&format!("{prefix}.b")))
}

/// Add a Glorot-initialised dense layer (zero bias) to `params`.
pub(crate) fn init_dense<R: Rng + ?Sized>(
    params: &mut ParamSet,
    rng: &mut R,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
) {
    params.insert(format!("{prefix}.w"), glorot(rng, fan_in, fan_out));
    params.insert(format!("{prefix}.b"), Tensor::zeros(&[fan_out]));
}

/// Names of an MLP's layers in forward order.
pub(crate) fn layer_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("l{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn load_checks_names_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = ParamSet::new();
        init_dense(&mut p, &mut rng, "l0", 3, 2);
        let mut other = p.blocks().clone();
        other.insert("l0.w".into(), Tensor::zeros(&[3, 2]));
        p.load(&other).unwrap();
        assert_eq!(p.get("l0.w").unwrap(), &Tensor::zeros(&[3, 2]));
        other.insert("l0.w".into(), Tensor::zeros(&[2, 2]));
        assert!(p.load(&other).is_err());
        other.remove("l0.w");
        assert!(p.load(&other).is_err());
    }

    #[test]
    fn glorot_respects_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = glorot(&mut rng, 10, 6);
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= limit));
    }
}
