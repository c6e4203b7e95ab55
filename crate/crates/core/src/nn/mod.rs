//! The action network, the recurrent critic and the reward head.

mod action;
mod critic;
mod params;
mod reward;

pub use action::{ActionNet, ActionNetConfig, Bounds, SeedBatch};
pub use critic::{CellKind, CellState, Critic, CriticConfig, PairIndex};
pub(crate) use params::glorot as glorot_matrix;
pub use params::{Activation, BoundParams, ParamSet};
pub use reward::{RewardHead, RewardHeadConfig};
