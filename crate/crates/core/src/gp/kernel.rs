use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared-exponential kernel with per-dimension lengthscales,
/// `k(x, x') = s · exp(−½ Σ_i ((x_i − x'_i) / ℓ_i)²)` with `0 < s ≤ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    lengthscales: Vec<f64>,
    signal_variance: f64,
}

impl RbfKernel {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64) -> Result<Self> {
        if lengthscales.is_empty() || lengthscales.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("lengthscales must be positive and finite"));
        }
        if !(signal_variance > 0.0 && signal_variance <= 1.0) {
            return Err(Error::invalid(format!(
                "signal variance must lie in (0, 1], got {signal_variance}"
            )));
        }
        Ok(Self {
            lengthscales,
            signal_variance,
        })
    }

    /// One lengthscale shared by all `dim` inputs.
    pub fn isotropic(dim: usize, lengthscale: f64, signal_variance: f64) -> Result<Self> {
        Self::new(vec![lengthscale; dim], signal_variance)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(y)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| ((a - b) / l).powi(2))
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }

    /// `n × n` Gram matrix of row-major `x` (`n × d`).
    pub fn gram(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let n = x.len() / d;
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            k[i * n + i] = self.signal_variance;
            for j in 0..i {
                let v = self.eval(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }

    /// `k(X, q)` for one query.
    pub fn cross(&self, x: &[f64], q: &[f64]) -> Vec<f64> {
        x.chunks(self.dim()).map(|row| self.eval(row, q)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_is_signal_variance() {
        let k = RbfKernel::new(vec![0.3, 2.0], 0.7).unwrap();
        assert_eq!(k.eval(&[1.0, -2.0], &[1.0, -2.0]), 0.7);
        let g = k.gram(&[0.0, 0.0, 1.0, 1.0, 0.5, -1.0]);
        for i in 0..3 {
            assert_eq!(g[i * 3 + i], 0.7);
            for j in 0..3 {
                assert_eq!(g[i * 3 + j], g[j * 3 + i]);
            }
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(RbfKernel::isotropic(2, 0.0, 1.0).is_err());
        assert!(RbfKernel::isotropic(2, 1.0, 1.5).is_err());
        assert!(RbfKernel::isotropic(0, 1.0, 1.0).is_err());
    }

    #[test]
    fn one_lengthscale_apart() {
        let k = RbfKernel::isotropic(1, 2.0, 1.0).unwrap();
        assert!((k.eval(&[0.0], &[2.0]) - (-0.5f64).exp()).abs() < 1e-15);
    }
}
