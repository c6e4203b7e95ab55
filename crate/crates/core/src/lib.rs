//! Variational Bayesian optimization with a mutual-information exploration bonus.

pub mod autodiff;
pub mod benchmarks;
pub mod error;
pub mod flops;
pub mod gp;
pub mod harness;
pub mod linalg;
pub mod mi;
pub mod nn;
pub mod trace;
pub mod vbo;

pub use error::{Error, Result};
