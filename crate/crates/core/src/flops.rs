//! Asymptotic per-iteration cost model for GP, BNN and VBO-MI surrogates.
//!
//! Every expression is evaluated with unit constant factors, so the numbers
//! are model FLOPs for order-of-magnitude comparison, not hardware counts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants of the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComplexityParams {
    /// BNN parameter count `W`.
    pub w: u64,
    /// Input dimension `D`.
    pub d: u64,
    /// LSTM hidden width `H`.
    pub h: u64,
    /// Posterior samples `S`.
    pub s: u64,
    /// Leapfrog steps per sample `L`.
    pub l: u64,
    /// Training epochs `E`.
    pub e: u64,
    pub n_starts: u64,
    pub n_steps: u64,
    pub k_a: u64,
    pub k_b: u64,
}

impl Default for ComplexityParams {
    fn default() -> Self {
        Self {
            w: 10_000,
            d: 10,
            h: 64,
            s: 50,
            l: 20,
            e: 100,
            n_starts: 10,
            n_steps: 50,
            k_a: 5,
            k_b: 10,
        }
    }
}

impl ComplexityParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("w", self.w),
            ("d", self.d),
            ("h", self.h),
            ("s", self.s),
            ("l", self.l),
            ("e", self.e),
            ("n_starts", self.n_starts),
            ("n_steps", self.n_steps),
            ("k_a", self.k_a),
            ("k_b", self.k_b),
        ];
        match all.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(Error::Config(format!("complexity parameter {name} must be positive"))),
            None => Ok(()),
        }
    }

    /// Acquisition-function evaluations of an inner-loop optimiser, `N`.
    pub fn n_acquisition(&self) -> u64 {
        self.n_starts * self.n_steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gp,
    Hmc,
    Dkl,
    Lla,
    Vbo,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Gp, Method::Hmc, Method::Dkl, Method::Lla, Method::Vbo];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gp => "gp",
            Method::Hmc => "hmc",
            Method::Dkl => "dkl",
            Method::Lla => "lla",
            Method::Vbo => "vbo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown FLOP model method {s:?}; expected one of gp, hmc, dkl, lla, vbo"
            ))
        })
    }
}

/// Model FLOPs of one BO iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlopReport {
    pub method: Method,
    pub t: u64,
    pub surrogate_flops: u128,
    pub acquisition_flops: u128,
    pub total: u128,
    /// Acquisition cost relative to VBO-MI's at the same constants.
    pub ratio_vs_vbo: f64,
}

fn costs(method: Method, t: u128, p: &ComplexityParams) -> (u128, u128) {
    let [w, h, s, l, k_a, k_b] = [p.w, p.h, p.s, p.l, p.k_a, p.k_b].map(u128::from);
    let n = u128::from(p.n_acquisition());
    match method {
        Method::Gp => (t * t * t, n * t * t),
        Method::Hmc => (s * l * t * w, n * s * w),
        Method::Dkl => (t * w + t * t * t, n * (t * t + w)),
        Method::Lla => (t * w + w * w * w, n * w * w),
        Method::Vbo => (k_a * t * h, k_b * w),
    }
}

/// Surrogate-update and acquisition cost of `method` at `t` observations.
pub fn method_flops(method: Method, t: u64, params: &ComplexityParams) -> Result<FlopReport> {
    params.validate()?;
    if t == 0 {
        return Err(Error::Config("the FLOP model needs t ≥ 1".into()));
    }
    let (surrogate_flops, acquisition_flops) = costs(method, u128::from(t), params);
    let (_, vbo_acq) = costs(Method::Vbo, u128::from(t), params);
    Ok(FlopReport {
        method,
        t,
        surrogate_flops,
        acquisition_flops,
        total: surrogate_flops + acquisition_flops,
        ratio_vs_vbo: acquisition_flops as f64 / vbo_acq as f64,
    })
}

/// [`method_flops`] with the method given by name.
pub fn method_flops_by_name(method: &str, t: u64, params: &ComplexityParams) -> Result<FlopReport> {
    method_flops(method.parse()?, t, params)
}

/// Reports for every method and every `t`, method-major.
pub fn flops_table(methods: &[Method], ts: &[u64], params: &ComplexityParams) -> Result<Vec<FlopReport>> {
    let mut out = Vec::with_capacity(methods.len() * ts.len());
    for &m in methods {
        for &t in ts {
            out.push(method_flops(m, t, params)?);
        }
    }
    Ok(out)
}

/// Smallest `t ≤ t_max` at which `a`'s total exceeds `b`'s.
pub fn crossover(a: Method, b: Method, params: &ComplexityParams, t_max: u64) -> Result<Option<u64>> {
    params.validate()?;
    // Linear scan: two totals need not cross only once.
    for t in 1..=t_max {
        if method_flops(a, t, params)?.total > method_flops(b, t, params)?.total {
            return Ok(Some(t));
        }
    }
    Ok(None)
}
