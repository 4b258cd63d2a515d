//! Episodic environments with Markov states.
//!
//! Four toy environments are provided, each exercising one theme:
//! [`ChainWorld`] (sparse reward), [`GridWorld`] (discrete TD learning),
//! [`PointMass`] (continuous control) and [`DatasetBandit`] (one-step
//! classification with an accuracy reward). [`TimeLimit`] cuts episodes and
//! appends the remaining time budget to the state.
//!
//! `done` marks the end of an episode; `truncated` is additionally set when
//! the end came from a time limit rather than a true terminal state.

mod bandit;
mod chain;
mod grid;
mod model;
mod point_mass;
mod time_limit;

pub use bandit::{gaussian_blobs, two_moons, DatasetBandit};
pub use chain::ChainWorld;
pub use grid::{GridAction, GridWorld, GridWorldConfig};
pub use model::TabularModel;
pub use point_mass::PointMass;
pub use time_limit::TimeLimit;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionValue {
    Discrete(usize),
    Continuous(Vec<Real>),
}

impl ActionValue {
    pub fn discrete(&self) -> Option<usize> {
        match self {
            ActionValue::Discrete(i) => Some(*i),
            ActionValue::Continuous(_) => None,
        }
    }

    pub fn continuous(&self) -> Option<&[Real]> {
        match self {
            ActionValue::Discrete(_) => None,
            ActionValue::Continuous(v) => Some(v),
        }
    }

    /// Flat numeric encoding: the index for discrete actions, the vector otherwise.
    pub fn to_vec(&self) -> Vec<Real> {
        match self {
            ActionValue::Discrete(i) => vec![*i as Real],
            ActionValue::Continuous(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionKind {
    Discrete(usize),
    Continuous {
        dim: usize,
        low: Vec<Real>,
        high: Vec<Real>,
    },
}

impl ActionKind {
    pub fn continuous_uniform(dim: usize, low: Real, high: Real) -> Self {
        ActionKind::Continuous {
            dim,
            low: vec![low; dim],
            high: vec![high; dim],
        }
    }

    /// Number of scalars needed to encode one action.
    pub fn width(&self) -> usize {
        match self {
            ActionKind::Discrete(_) => 1,
            ActionKind::Continuous { dim, .. } => *dim,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionKind::Discrete(_))
    }

    pub fn validate(&self, action: &ActionValue) -> Result<()> {
        match (self, action) {
            (ActionKind::Discrete(n), ActionValue::Discrete(i)) => {
                if i >= n {
                    return Err(Error::Action(format!("index {i} out of range 0..{n}")));
                }
            }
            (ActionKind::Continuous { dim, low, high }, ActionValue::Continuous(v)) => {
                if v.len() != *dim {
                    return Err(Error::Action(format!("expected {dim} components, got {}", v.len())));
                }
                for (k, &x) in v.iter().enumerate() {
                    if !x.is_finite() || x < low[k] || x > high[k] {
                        return Err(Error::Action(format!(
                            "component {k} = {x} outside [{}, {}]",
                            low[k], high[k]
                        )));
                    }
                }
            }
            _ => return Err(Error::Action(format!("{action:?} does not fit {self:?}"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_kind: ActionKind,
    pub max_episode_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub next_state: Vec<Real>,
    pub reward: Real,
    pub done: bool,
    pub truncated: bool,
}

/// One environment interaction `(s, a, r, s', done)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<Real>,
    pub action: ActionValue,
    pub reward: Real,
    /// Populated even when `done`: the terminal observation.
    pub next_state: Vec<Real>,
    pub done: bool,
    pub truncated: bool,
}

impl Transition {
    /// True terminal state (not a time-limit cut).
    pub fn terminal(&self) -> bool {
        self.done && !self.truncated
    }

    /// Multiplier for the bootstrap term of a one-step target.
    pub fn bootstrap_mask(&self, bootstrap_on_truncation: bool) -> Real {
        if !self.done || (self.truncated && bootstrap_on_truncation) {
            1.0
        } else {
            0.0
        }
    }
}

pub trait Environment: Send {
    fn name(&self) -> &str;

    fn spec(&self) -> EnvSpec;

    /// Starts a new episode. The same seed always yields the same start state.
    fn reset(&mut self, seed: Option<u64>) -> Vec<Real>;

    fn step(&mut self, action: &ActionValue) -> Result<Step>;

    /// Inclusive bounds of every reward the environment can emit.
    fn reward_range(&self) -> (Real, Real);

    /// Exact dynamics for finite deterministic environments.
    fn exact_model(&self) -> Option<TabularModel> {
        None
    }
}

impl Environment for Box<dyn Environment> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn spec(&self) -> EnvSpec {
        (**self).spec()
    }
    fn reset(&mut self, seed: Option<u64>) -> Vec<Real> {
        (**self).reset(seed)
    }
    fn step(&mut self, action: &ActionValue) -> Result<Step> {
        (**self).step(action)
    }
    fn reward_range(&self) -> (Real, Real) {
        (**self).reward_range()
    }
    fn exact_model(&self) -> Option<TabularModel> {
        (**self).exact_model()
    }
}

/// Tracks whether an episode is running; shared by the concrete envs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) enum Phase {
    #[default]
    NeedsReset,
    Running,
    Done,
}

impl Phase {
    pub(crate) fn check_step(self, env: &str) -> Result<()> {
        match self {
            Phase::Running => Ok(()),
            Phase::NeedsReset => Err(Error::EpisodeState(format!("{env}: step before reset"))),
            Phase::Done => Err(Error::EpisodeState(format!("{env}: step after episode end"))),
        }
    }
}

pub(crate) fn one_hot(index: usize, n: usize) -> Vec<Real> {
    let mut v = vec![0.0; n];
    v[index] = 1.0;
    v
}
