//! Action-value learning: bootstrapped targets, Q-networks, target networks,
//! the deterministic policy gradient, and a tabular Q-learner.

mod q;
mod tabular;
mod targets;

pub use q::{
    deterministic_pg_loss, one_hot_targets, one_step_q_loss, vector_q_loss, ActionCritic, QFunction, QMode,
    TargetNetwork, TargetUpdate,
};
pub use tabular::TabularQ;
pub use targets::{
    argmax, discounted_sum, double_q_target, nstep_q_target, td0_target, twin_q_target, DiscountedHorizon,
};
