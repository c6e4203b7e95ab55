use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Objective;
use crate::error::{Error, Result};

const NOISE_STREAM: u64 = 7;

/// `y = f(x) + ε` with i.i.d. `ε ~ N(0, sd²)` drawn from an owned stream.
pub struct NoisyObjective {
    inner: Arc<dyn Objective>,
    sd: f64,
    rng: ChaCha8Rng,
}

impl NoisyObjective {
    pub fn new(inner: Arc<dyn Objective>, sd: f64, seed: u64) -> Result<Self> {
        if !(sd >= 0.0 && sd.is_finite()) {
            return Err(Error::invalid(format!("noise sd must be finite and ≥ 0, got {sd}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Optimisers seeded with the same value use streams 0 to 3.
        rng.set_stream(NOISE_STREAM);
        Ok(Self { inner, sd, rng })
    }

    pub fn objective(&self) -> &Arc<dyn Objective> {
        &self.inner
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }

    /// One noisy observation. With `sd = 0` no random numbers are consumed.
    pub fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        let f = self.inner.evaluate(x)?;
        if self.sd == 0.0 {
            return Ok(f);
        }
        let e: f64 = self.rng.sample(StandardNormal);
        Ok(f + self.sd * e)
    }
}

impl std::fmt::Debug for NoisyObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoisyObjective")
            .field("objective", &self.inner.name())
            .field("sd", &self.sd)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::Branin;

    #[test]
    fn zero_sd_passes_through() {
        let f: Arc<dyn Objective> = Arc::new(Branin::new());
        let mut n = NoisyObjective::new(f.clone(), 0.0, 1).unwrap();
        let x = [1.0, 2.0];
        assert_eq!(n.evaluate(&x).unwrap(), f.evaluate(&x).unwrap());
    }

    #[test]
    fn sample_mean_is_unbiased() {
        let f: Arc<dyn Objective> = Arc::new(Branin::new());
        let sd = 0.5;
        let mut n = NoisyObjective::new(f.clone(), sd, 7).unwrap();
        let x = [0.5, 4.0];
        let k = 100_000;
        let mean = (0..k).map(|_| n.evaluate(&x).unwrap()).sum::<f64>() / k as f64;
        // Standard error is sd/√k ≈ 0.0016; 0.01·sd is about three of them.
        assert!((mean - f.evaluate(&x).unwrap()).abs() < 0.01 * sd);
    }

    #[test]
    fn seeded_sequence_repeats() {
        let f: Arc<dyn Objective> = Arc::new(Branin::new());
        let mut a = NoisyObjective::new(f.clone(), 1.0, 3).unwrap();
        let mut b = NoisyObjective::new(f, 1.0, 3).unwrap();
        for _ in 0..5 {
            assert_eq!(a.evaluate(&[0.0, 0.0]).unwrap(), b.evaluate(&[0.0, 0.0]).unwrap());
        }
    }
}
