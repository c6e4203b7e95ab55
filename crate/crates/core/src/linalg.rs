//! Dense Cholesky factorisation for symmetric positive-definite systems.

use crate::error::{Error, Result};

/// Diagonal jitter tried, in order, when a factorisation fails.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Lower-triangular `L` with `A = L·Lᵀ`, stored row-major `n × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factor `a` (row-major `n × n`); `None` if a pivot is not positive.
    pub fn factor(a: &[f64], n: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    /// Factor `a + jitter·I`, climbing [`JITTER_LADDER`] until it succeeds.
    pub fn factor_with_jitter(a: &[f64], n: usize) -> Result<(Self, f64)> {
        let mut work = a.to_vec();
        for &jitter in &JITTER_LADDER {
            for i in 0..n {
                work[i * n + i] = a[i * n + i] + jitter;
            }
            if let Some(c) = Self::factor(&work, n) {
                return Ok((c, jitter));
            }
        }
        Err(Error::Cholesky {
            jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
            condition: condition_estimate(a, n),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> &[f64] {
        &self.l
    }

    /// Solve `L·z = b` in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(l, z)| l * z).sum();
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }

    /// Solve `Lᵀ·z = b` in place.
    pub fn solve_upper(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solve `A·z = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut z = b.to_vec();
        self.solve_lower(&mut z);
        self.solve_upper(&mut z);
        z
    }

    /// `A⁻¹` as a row-major matrix, via `L⁻ᵀ L⁻¹`.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let l = &self.l;
        // Row i of M = L⁻¹ is (e_i − Σ_{k<i} L_ik · row_k(M)) / L_ii.
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            let (done, rest) = m.split_at_mut(i * n);
            let row = &mut rest[..n];
            row[i] = 1.0;
            for k in 0..i {
                let lik = l[i * n + k];
                if lik != 0.0 {
                    for (r, v) in row[..=k].iter_mut().zip(&done[k * n..k * n + k + 1]) {
                        *r -= lik * v;
                    }
                }
            }
            let d = l[i * n + i];
            row[..=i].iter_mut().for_each(|v| *v /= d);
        }
        // A⁻¹_ij = Σ_r M_ri M_rj, accumulated over rows of M.
        let mut inv = vec![0.0; n * n];
        for r in 0..n {
            let mr = &m[r * n..r * n + r + 1];
            for (i, &a) in mr.iter().enumerate() {
                if a != 0.0 {
                    for (o, b) in inv[i * n..i * n + i + 1].iter_mut().zip(&mr[..=i]) {
                        *o += a * b;
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                inv[j * n + i] = inv[i * n + j];
            }
        }
        inv
    }

    /// `log |A|`.
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>() * 2.0
    }
}

/// Ratio of the largest to the smallest diagonal entry, a cheap stand-in for
/// the condition number that is reported when factorisation fails.
fn condition_estimate(a: &[f64], n: usize) -> f64 {
    let diag = (0..n).map(|i| a[i * n + i].abs());
    let (lo, hi) = diag.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factors_and_solves_small_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let c = Cholesky::factor(&a, 2).unwrap();
        assert_eq!(c.lower(), &[2.0, 0.0, 1.0, 2.0f64.sqrt()]);
        let z = c.solve(&[2.0, 5.0]);
        // 4z0 + 2z1 = 2, 2z0 + 3z1 = 5
        assert!((z[0] + 0.5).abs() < 1e-14 && (z[1] - 2.0).abs() < 1e-14);
        assert!((c.log_det() - 8.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn jitter_rescues_singular_psd() {
        // Rank-one PSD matrix.
        let a = [1.0, 1.0, 1.0, 1.0];
        assert!(Cholesky::factor(&a, 2).is_none());
        let (_, jitter) = Cholesky::factor_with_jitter(&a, 2).unwrap();
        assert!(jitter > 0.0);
    }

    #[test]
    fn indefinite_matrix_fails_with_error() {
        let a = [1.0, 2.0, 2.0, 1.0];
        match Cholesky::factor_with_jitter(&a, 2) {
            Err(Error::Cholesky { jitter, .. }) => assert_eq!(jitter, 1e-6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = [2.0, 0.5, 0.1, 0.5, 1.5, 0.2, 0.1, 0.2, 1.0];
        let c = Cholesky::factor(&a, 3).unwrap();
        let inv = c.inverse();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }
}
