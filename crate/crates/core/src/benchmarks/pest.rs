use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Objective;
use crate::error::{Error, Result};
use crate::nn::Bounds;

pub const N_STAGES: usize = 25;
pub const N_CATEGORIES: usize = 5;

/// Fraction of the pest population removed by each action; action 0 is
/// "no pesticide" and strength rises with the index.
pub const KILL_RATE: [f64; N_CATEGORIES] = [0.0, 0.25, 0.4, 0.55, 0.7];
/// Cost of applying each action at one stage.
pub const PRICE: [f64; N_CATEGORIES] = [0.0, 0.6, 1.0, 1.5, 2.2];
/// Cost per unit of infestation left standing after treatment.
pub const DAMAGE: f64 = 6.0;
pub const INITIAL_INFESTATION: f64 = 0.1;
/// Per-stage logistic spread rates are drawn uniformly from this range.
pub const SPREAD_RANGE: (f64, f64) = (0.2, 0.6);

/// Stage-wise pest control over `N_STAGES` stages with `N_CATEGORIES`
/// actions each, presented to continuous optimisers through one-hot blocks.
///
/// Dynamics, with `p` the infested fraction (starting at
/// [`INITIAL_INFESTATION`]) and `r_t` a seeded per-stage spread rate:
///
/// ```text
/// q      = p · (1 − KILL_RATE[a_t])
/// cost  += PRICE[a_t] + DAMAGE · q
/// p      = q + r_t · q · (1 − q)
/// ```
///
/// The objective is the negative total cost. `q ↦ q + r·q·(1 − q)` is
/// increasing on `[0, 1]` for `r < 1`, so a stronger action never leaves more
/// infestation behind.
#[derive(Debug, Clone)]
pub struct PestControl {
    bounds: Bounds,
    spread: [f64; N_STAGES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PestConfig {
    /// Seed of the spread-rate draw.
    pub seed: u64,
}

impl Default for PestConfig {
    fn default() -> Self {
        Self { seed: 0 }
    }
}

/// One result per stage of [`PestControl::simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct PestTrace {
    pub infestation: Vec<f64>,
    pub total_cost: f64,
}

impl PestControl {
    pub fn new(config: PestConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut spread = [0.0; N_STAGES];
        for r in &mut spread {
            *r = rng.random_range(SPREAD_RANGE.0..SPREAD_RANGE.1);
        }
        Self {
            bounds: Bounds::new(&[(0.0, 1.0); N_STAGES * N_CATEGORIES]).expect("static bounds"),
            spread,
        }
    }

    pub fn simulate(&self, actions: &[usize]) -> Result<PestTrace> {
        if actions.len() != N_STAGES {
            return Err(Error::invalid(format!(
                "expected {N_STAGES} actions, got {}",
                actions.len()
            )));
        }
        let mut p = INITIAL_INFESTATION;
        let mut total = 0.0;
        let mut infestation = Vec::with_capacity(N_STAGES);
        for (&a, &r) in actions.iter().zip(&self.spread) {
            if a >= N_CATEGORIES {
                return Err(Error::invalid(format!("action {a} is not below {N_CATEGORIES}")));
            }
            let q = p * (1.0 - KILL_RATE[a]);
            total += PRICE[a] + DAMAGE * q;
            p = q + r * q * (1.0 - q);
            infestation.push(p);
        }
        Ok(PestTrace {
            infestation,
            total_cost: total,
        })
    }

    /// Negative total cost of a categorical policy.
    pub fn value(&self, actions: &[usize]) -> Result<f64> {
        Ok(-self.simulate(actions)?.total_cost)
    }
}

impl Objective for PestControl {
    fn name(&self) -> &str {
        "pest_control"
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn raw(&self, x: &[f64]) -> Result<f64> {
        self.value(&onehot_decode(x, N_CATEGORIES)?)
    }
}

/// Concatenated one-hot blocks of width `n_categories`.
pub fn onehot_encode(categories: &[usize], n_categories: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; categories.len() * n_categories];
    for (i, &c) in categories.iter().enumerate() {
        if c >= n_categories {
            return Err(Error::invalid(format!(
                "category {c} at position {i} is not below {n_categories}"
            )));
        }
        out[i * n_categories + c] = 1.0;
    }
    Ok(out)
}

/// Per-block argmax; ties go to the lowest index.
pub fn onehot_decode(x: &[f64], n_categories: usize) -> Result<Vec<usize>> {
    if n_categories == 0 || x.len() % n_categories != 0 {
        return Err(Error::invalid(format!(
            "length {} is not a multiple of {n_categories}",
            x.len()
        )));
    }
    Ok(x.chunks(n_categories)
        .map(|block| {
            let mut best = 0;
            for (k, &v) in block.iter().enumerate() {
                if v > block[best] {
                    best = k;
                }
            }
            best
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_layout() {
        let v = onehot_encode(&[0; N_STAGES], N_CATEGORIES).unwrap();
        assert_eq!(v.len(), 125);
        for (i, x) in v.iter().enumerate() {
            assert_eq!(*x, if i % 5 == 0 { 1.0 } else { 0.0 });
        }
        assert!(onehot_encode(&[5], N_CATEGORIES).is_err());
    }

    #[test]
    fn decode_argmax_and_ties() {
        let mut x = vec![0.0; 10];
        x[1] = 0.9;
        x[0] = 0.1;
        assert_eq!(onehot_decode(&x, 5).unwrap(), vec![1, 0]);
    }

    #[test]
    fn all_none_cost_is_frozen() {
        let f = PestControl::new(PestConfig::default());
        let v = f.value(&[0; N_STAGES]).unwrap();
        assert!((v - ALL_NONE_VALUE).abs() < 1e-12, "{v:.15}");
    }

    /// Regression constant for the untreated policy under the default seed.
    const ALL_NONE_VALUE: f64 = -114.535_679_745_368_78;

    #[test]
    fn stronger_uniform_policies_never_raise_infestation() {
        let f = PestControl::new(PestConfig::default());
        let traces: Vec<_> = (0..N_CATEGORIES)
            .map(|a| f.simulate(&[a; N_STAGES]).unwrap().infestation)
            .collect();
        for w in traces.windows(2) {
            for (weak, strong) in w[0].iter().zip(&w[1]) {
                assert!(strong <= weak);
            }
        }
    }
}
