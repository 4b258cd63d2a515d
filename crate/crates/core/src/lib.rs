//! Desk-scale deep reinforcement learning.
//!
//! Value learning and stochastic policy gradients for non-differentiable
//! objectives, their multi-step extensions, Soft Actor-Critic, Proximal
//! Policy Optimization and tree-search planning, all on top of a small
//! hand-written MLP core.
//!
//! The numeric core ([`ndmath`], the return estimators in [`onpolicy`] and
//! the target constructions in [`value`]) is generic over [`ndmath::Scalar`];
//! the agents and environments run on [`Real`] (`f64`).

pub mod error;
pub mod buffer;
pub mod env;
pub mod harness;
pub mod ndmath;
pub mod onpolicy;
pub mod plan;
pub mod policy;
pub mod ppo;
pub mod sac;
pub mod seeding;
pub mod value;

pub use error::{Error, Result};

/// Scalar type used by environments and agents.
pub type Real = f64;

pub type Tensor = ndmath::Tensor<Real>;
pub type Mlp = ndmath::Mlp<Real>;
pub type AdamState = ndmath::AdamState<Real>;

pub type Tensor32 = ndmath::Tensor<f32>;
pub type Mlp32 = ndmath::Mlp<f32>;
