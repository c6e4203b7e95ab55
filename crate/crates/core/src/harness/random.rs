use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::benchmarks::NoisyObjective;
use crate::error::{Error, Result};
use crate::trace::{Recorder, RunResult, RunStatus};

/// Uniform random search in batches of `batch`, through the same noise
/// wrapper as the model-based methods.
pub fn random_search(iterations: usize, batch: usize, seed: u64, objective: &mut NoisyObjective) -> Result<RunResult> {
    if batch == 0 {
        return Err(Error::Config("random search needs batch ≥ 1".into()));
    }
    let bounds = objective.objective().bounds().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut rec = Recorder::new();
    let mut x = vec![0.0; bounds.dim()];
    for _ in 0..iterations {
        let mut rewards = Vec::with_capacity(batch);
        for _ in 0..batch {
            for (k, v) in x.iter_mut().enumerate() {
                *v = rng.random_range(bounds.lo()[k]..=bounds.hi()[k]);
            }
            let y = objective.evaluate(&x)?;
            rec.observe(&x, y);
            rewards.push(y);
        }
        rec.push(rewards, f64::NAN, f64::NAN, f64::NAN, 0);
    }
    Ok(RunResult {
        method: "random".into(),
        seed,
        best_x: rec.best_x,
        best_y: rec.best_y,
        evaluations: rec.evaluations,
        warmup_evaluations: 0,
        traces: rec.traces,
        status: RunStatus::Completed,
        params: BTreeMap::new(),
    })
}
