//! Exact Gaussian-process regression, the GP-UCB baseline and the
//! posterior components used by the ablated optimisers.

mod kernel;
mod model;
mod run;
mod ucb;

pub use kernel::RbfKernel;
pub use model::{ablation_components, info_gain, GpModel, HyperFitConfig};
pub use run::{gp_iteration_flops, run_gp_ucb, GpUcbConfig};
pub use ucb::{from_unit, maximize_acquisition, to_unit, ucb_acquire, Maximizer, ScaledGp, UcbConfig};
