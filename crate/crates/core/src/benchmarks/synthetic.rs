use std::f64::consts::{E, PI};

use super::{KnownOptimum, Objective};
use crate::error::{Error, Result};
use crate::nn::Bounds;

/// Negated Branin on `[-5, 10] × [0, 15]`; maximum `-0.397887` at three points.
#[derive(Debug, Clone)]
pub struct Branin {
    bounds: Bounds,
}

impl Branin {
    pub const OPTIMUM: f64 = -0.397_887_357_729_738;

    pub fn new() -> Self {
        Self {
            bounds: Bounds::new(&[(-5.0, 10.0), (0.0, 15.0)]).expect("static bounds"),
        }
    }
}

impl Default for Branin {
    fn default() -> Self {
        Self::new()
    }
}

impl Objective for Branin {
    fn name(&self) -> &str {
        "branin"
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn raw(&self, x: &[f64]) -> Result<f64> {
        let (x1, x2) = (x[0], x[1]);
        let b = 5.1 / (4.0 * PI * PI);
        let c = 5.0 / PI;
        let t = 1.0 / (8.0 * PI);
        let q = x2 - b * x1 * x1 + c * x1 - 6.0;
        Ok(-(q * q + 10.0 * (1.0 - t) * x1.cos() + 10.0))
    }

    fn known_optimum(&self) -> Option<KnownOptimum> {
        Some(KnownOptimum {
            x: vec![PI, 2.275],
            value: Self::OPTIMUM,
        })
    }
}

const H6_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const H6_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const H6_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

/// Negated Hartmann-6 on `[0, 1]⁶`; maximum about `3.32237`.
#[derive(Debug, Clone)]
pub struct Hartmann6 {
    bounds: Bounds,
}

impl Hartmann6 {
    pub const OPTIMUM: f64 = 3.322_368_011_391_339;
    pub const ARGMAX: [f64; 6] = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573];

    pub fn new() -> Self {
        Self {
            bounds: Bounds::new(&[(0.0, 1.0); 6]).expect("static bounds"),
        }
    }
}

impl Default for Hartmann6 {
    fn default() -> Self {
        Self::new()
    }
}

impl Objective for Hartmann6 {
    fn name(&self) -> &str {
        "hartmann6"
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn raw(&self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..4 {
            let inner: f64 = (0..6).map(|j| H6_A[i][j] * (x[j] - H6_P[i][j]).powi(2)).sum();
            total += H6_ALPHA[i] * (-inner).exp();
        }
        Ok(total)
    }

    fn known_optimum(&self) -> Option<KnownOptimum> {
        Some(KnownOptimum {
            x: Self::ARGMAX.to_vec(),
            value: Self::OPTIMUM,
        })
    }
}

/// Negated Ackley on `[-5, 10]^d` (configurable); maximum `0` at the origin.
#[derive(Debug, Clone)]
pub struct Ackley {
    bounds: Bounds,
}

impl Ackley {
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_bounds(&vec![(-5.0, 10.0); dim])
    }

    pub fn with_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        if bounds.iter().any(|&(lo, hi)| lo > 0.0 || hi < 0.0) {
            return Err(Error::invalid("ackley bounds must contain the origin"));
        }
        Ok(Self {
            bounds: Bounds::new(bounds)?,
        })
    }
}

impl Objective for Ackley {
    fn name(&self) -> &str {
        "ackley"
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn raw(&self, x: &[f64]) -> Result<f64> {
        let d = x.len() as f64;
        let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
        let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / d;
        Ok(20.0 * (-0.2 * sq.sqrt()).exp() + cs.exp() - 20.0 - E)
    }

    fn known_optimum(&self) -> Option<KnownOptimum> {
        Some(KnownOptimum {
            x: vec![0.0; self.dim()],
            value: 0.0,
        })
    }
}

/// `-‖x‖²` on `[-5, 5]^d`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    bounds: Bounds,
}

impl Quadratic {
    pub fn new(dim: usize) -> Result<Self> {
        Ok(Self {
            bounds: Bounds::new(&vec![(-5.0, 5.0); dim])?,
        })
    }
}

impl Objective for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn raw(&self, x: &[f64]) -> Result<f64> {
        Ok(-x.iter().map(|v| v * v).sum::<f64>())
    }

    fn known_optimum(&self) -> Option<KnownOptimum> {
        Some(KnownOptimum {
            x: vec![0.0; self.dim()],
            value: 0.0,
        })
    }
}

/// The same value everywhere on `[0, 1]^d`.
#[derive(Debug, Clone)]
pub struct Constant {
    bounds: Bounds,
    value: f64,
}

impl Constant {
    pub fn new(dim: usize, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::invalid("constant objective needs a finite value"));
        }
        Ok(Self {
            bounds: Bounds::new(&vec![(0.0, 1.0); dim])?,
            value,
        })
    }
}

impl Objective for Constant {
    fn name(&self) -> &str {
        "constant"
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn raw(&self, _x: &[f64]) -> Result<f64> {
        Ok(self.value)
    }
}
