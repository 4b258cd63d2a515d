use super::{one_hot, ActionKind, ActionValue, EnvSpec, Environment, Phase, Step, TabularModel};
use crate::error::{Error, Result};
use crate::Real;

/// Positions `0..length` on a line; reaching the right end pays +1 and ends
/// the episode. Action 0 moves left (staying put at 0), action 1 moves right.
#[derive(Debug, Clone)]
pub struct ChainWorld {
    length: usize,
    step_penalty: Real,
    pos: usize,
    phase: Phase,
}

impl ChainWorld {
    pub fn new(length: usize) -> Result<Self> {
        if length < 2 {
            return Err(Error::Config(format!("chain length must be >= 2, got {length}")));
        }
        Ok(Self {
            length,
            step_penalty: 0.0,
            pos: 0,
            phase: Phase::NeedsReset,
        })
    }

    /// Reward added on every non-goal step, e.g. `-0.01`.
    pub fn with_step_penalty(mut self, penalty: Real) -> Self {
        self.step_penalty = penalty;
        self
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    fn rule(&self, pos: usize, action: usize) -> (usize, Real) {
        let next = if action == 0 { pos.saturating_sub(1) } else { pos + 1 };
        let reward = if next == self.length - 1 { 1.0 } else { self.step_penalty };
        (next, reward)
    }
}

impl Environment for ChainWorld {
    fn name(&self) -> &str {
        "chain"
    }

    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: self.length,
            action_kind: ActionKind::Discrete(2),
            max_episode_steps: None,
        }
    }

    fn reset(&mut self, _seed: Option<u64>) -> Vec<Real> {
        self.pos = 0;
        self.phase = Phase::Running;
        one_hot(0, self.length)
    }

    fn step(&mut self, action: &ActionValue) -> Result<Step> {
        self.phase.check_step("chain")?;
        self.spec().action_kind.validate(action)?;
        let a = action.discrete().expect("validated");
        let (next, reward) = self.rule(self.pos, a);
        self.pos = next;
        let done = next == self.length - 1;
        if done {
            self.phase = Phase::Done;
        }
        Ok(Step {
            next_state: one_hot(next, self.length),
            reward,
            done,
            truncated: false,
        })
    }

    fn reward_range(&self) -> (Real, Real) {
        (self.step_penalty.min(1.0), self.step_penalty.max(1.0))
    }

    fn exact_model(&self) -> Option<TabularModel> {
        let n = self.length;
        let terminal = (0..n).map(|s| s == n - 1).collect();
        let obs = (0..n).map(|s| one_hot(s, n)).collect();
        Some(TabularModel::from_fn(n, 2, 0, terminal, obs, |s, a| self.rule(s, a)))
    }
}
