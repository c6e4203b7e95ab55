use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Main-phase trajectories, time-major: `xs[τ]` is `B × d`, `ys[τ]` is `B × 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    batch: usize,
    dim: usize,
    xs: Vec<Tensor>,
    ys: Vec<Tensor>,
}

impl History {
    pub fn new(batch: usize, dim: usize) -> Self {
        Self {
            batch,
            dim,
            xs: Vec::new(),
            ys: Vec::new(),
        }
    }

    pub fn push(&mut self, x: Tensor, y: Tensor) -> Result<()> {
        if x.shape() != [self.batch, self.dim] || y.shape() != [self.batch, 1] {
            return Err(Error::Shape {
                op: "history",
                lhs: x.shape().to_vec(),
                rhs: y.shape().to_vec(),
            });
        }
        self.xs.push(x);
        self.ys.push(y);
        Ok(())
    }

    /// Number of steps `t`.
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Objective calls recorded, `B · t`.
    pub fn evaluation_count(&self) -> usize {
        self.batch * self.len()
    }

    pub fn xs(&self) -> &[Tensor] {
        &self.xs
    }

    pub fn ys(&self) -> &[Tensor] {
        &self.ys
    }

    /// The most recent `n` steps (all of them when fewer).
    pub fn window(&self, n: usize) -> (&[Tensor], &[Tensor]) {
        let start = self.len().saturating_sub(n);
        (&self.xs[start..], &self.ys[start..])
    }

    pub fn latest(&self) -> Option<(&Tensor, &Tensor)> {
        Some((self.xs.last()?, self.ys.last()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_and_counts() {
        let mut h = History::new(2, 1);
        for t in 0..5 {
            h.push(Tensor::filled(&[2, 1], t as f64), Tensor::filled(&[2, 1], -(t as f64)))
                .unwrap();
        }
        assert_eq!(h.evaluation_count(), 10);
        let (xs, ys) = h.window(3);
        assert_eq!(xs.len(), 3);
        assert_eq!(xs[0].data()[0], 2.0);
        assert_eq!(ys[2].data()[0], -4.0);
        assert!(h.push(Tensor::zeros(&[3, 1]), Tensor::zeros(&[3, 1])).is_err());
    }
}
