//! VBO-MI: a batch action net trained against a learned reward head and a
//! critic's mutual-information bound.

mod config;
mod history;
mod loss;
mod run;

pub use config::{ExploitationMode, ExplorationMode, GpAblationConfig, VboConfig};
pub use history::History;
pub use loss::{
    action_net_loss, candidate_dv, critic_update, exploitation_term, ActorContext, ActorLoss, Frozen, Scaling,
};
pub use run::{run, run_named, StepOutcome, VboState};
