//! Reverse-mode differentiation over dense `f64` arrays.
//!
//! A [`Tape`] records each primitive as it executes; [`Tape::backward`]
//! walks the record once in reverse and returns leaf gradients. Tapes are
//! cheap and meant to be rebuilt for every training step.

mod adam;
mod checkpoint;
mod counter;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use counter::{MacCounter, Phase};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{log_mean_exp, Tensor};
