use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ActionKind, ActionValue, EnvSpec, Environment, Phase, Step};
use crate::error::Result;
use crate::Real;

const POSITION_BOUND: Real = 10.0;

/// A unit mass on a line pushed by a bounded force.
///
/// `v' = 0.9 v + 0.1 a`, `x' = x + v'`, reward `-(x^2 + 0.1 a^2)` evaluated at
/// the pre-step position. Episodes last `horizon` steps and end truncated.
/// Positions are clamped to `[-10, 10]`, which bounds the reward.
#[derive(Debug, Clone)]
pub struct PointMass {
    horizon: usize,
    start: Option<(Real, Real)>,
    x: Real,
    v: Real,
    t: usize,
    rng: ChaCha8Rng,
    phase: Phase,
}

impl PointMass {
    pub fn new() -> Self {
        Self {
            horizon: 100,
            start: None,
            x: 0.0,
            v: 0.0,
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
            phase: Phase::NeedsReset,
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon.max(1);
        self
    }

    /// Fixed start state instead of `x ~ U[-1, 1], v = 0`.
    pub fn with_start(mut self, x: Real, v: Real) -> Self {
        self.start = Some((x, v));
        self
    }

    pub fn state(&self) -> (Real, Real) {
        (self.x, self.v)
    }
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointMass {
    fn name(&self) -> &str {
        "pointmass"
    }

    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: 2,
            action_kind: ActionKind::continuous_uniform(1, -1.0, 1.0),
            max_episode_steps: Some(self.horizon),
        }
    }

    fn reset(&mut self, seed: Option<u64>) -> Vec<Real> {
        if let Some(s) = seed {
            self.rng = ChaCha8Rng::seed_from_u64(s);
        }
        (self.x, self.v) = match self.start {
            Some(s) => s,
            None => (self.rng.random_range(-1.0..=1.0), 0.0),
        };
        self.t = 0;
        self.phase = Phase::Running;
        vec![self.x, self.v]
    }

    fn step(&mut self, action: &ActionValue) -> Result<Step> {
        self.phase.check_step("pointmass")?;
        self.spec().action_kind.validate(action)?;
        let a = action.continuous().expect("validated")[0];
        let reward = -(self.x * self.x + 0.1 * a * a);
        self.v = 0.9 * self.v + 0.1 * a;
        self.x = (self.x + self.v).clamp(-POSITION_BOUND, POSITION_BOUND);
        self.t += 1;
        let done = self.t >= self.horizon;
        if done {
            self.phase = Phase::Done;
        }
        Ok(Step {
            next_state: vec![self.x, self.v],
            reward,
            done,
            truncated: done,
        })
    }

    fn reward_range(&self) -> (Real, Real) {
        (-(POSITION_BOUND * POSITION_BOUND + 0.1), 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_push_from_rest() {
        let mut env = PointMass::new().with_start(0.0, 0.0);
        env.reset(None);
        let s = env.step(&ActionValue::Continuous(vec![1.0])).unwrap();
        assert!((s.next_state[0] - 0.1).abs() < 1e-15);
        assert!((s.next_state[1] - 0.1).abs() < 1e-15);
        assert!((s.reward + 0.1).abs() < 1e-15);
    }

    #[test]
    fn episode_ends_truncated_at_horizon() {
        let mut env = PointMass::new().with_horizon(5);
        env.reset(Some(1));
        for k in 1..=5 {
            let s = env.step(&ActionValue::Continuous(vec![0.0])).unwrap();
            assert_eq!(s.done, k == 5);
            assert_eq!(s.truncated, k == 5);
        }
    }

    #[test]
    fn seeded_start_repeats() {
        let mut env = PointMass::new();
        let a = env.reset(Some(42));
        let b = env.reset(Some(42));
        assert_eq!(a, b);
        assert!(a[0].abs() <= 1.0 && a[1] == 0.0);
    }

    #[test]
    fn rejects_out_of_bound_force() {
        let mut env = PointMass::new();
        env.reset(Some(0));
        assert!(env.step(&ActionValue::Continuous(vec![1.5])).is_err());
    }
}
