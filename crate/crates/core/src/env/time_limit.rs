use super::{ActionValue, EnvSpec, Environment, Step, TabularModel};
use crate::error::{Error, Result};
use crate::Real;

/// Cuts episodes after `limit` steps and appends `remaining / limit` to the state.
///
/// A cut is reported as `done` with `truncated` set; an inner terminal that
/// coincides with the cut stays a true terminal.
#[derive(Debug, Clone)]
pub struct TimeLimit<E> {
    inner: E,
    limit: usize,
    elapsed: usize,
    name: String,
}

impl<E: Environment> TimeLimit<E> {
    pub fn new(inner: E, limit: usize) -> Result<Self> {
        if limit < 1 {
            return Err(Error::Config("time limit must be >= 1".into()));
        }
        let name = format!("{}+timelimit", inner.name());
        Ok(Self {
            inner,
            limit,
            elapsed: 0,
            name,
        })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    fn augment(&self, mut state: Vec<Real>) -> Vec<Real> {
        state.push((self.limit - self.elapsed) as Real / self.limit as Real);
        state
    }
}

impl<E: Environment> Environment for TimeLimit<E> {
    fn name(&self) -> &str {
        &self.name
    }

    fn spec(&self) -> EnvSpec {
        let mut spec = self.inner.spec();
        spec.state_dim += 1;
        spec.max_episode_steps = Some(spec.max_episode_steps.map_or(self.limit, |m| m.min(self.limit)));
        spec
    }

    fn reset(&mut self, seed: Option<u64>) -> Vec<Real> {
        self.elapsed = 0;
        let s = self.inner.reset(seed);
        self.augment(s)
    }

    fn step(&mut self, action: &ActionValue) -> Result<Step> {
        if self.elapsed >= self.limit {
            return Err(Error::EpisodeState(format!("{}: step after time limit", self.name)));
        }
        let mut step = self.inner.step(action)?;
        self.elapsed += 1;
        if self.elapsed == self.limit && !step.done {
            step.done = true;
            step.truncated = true;
        }
        step.next_state = self.augment(std::mem::take(&mut step.next_state));
        Ok(step)
    }

    fn reward_range(&self) -> (Real, Real) {
        self.inner.reward_range()
    }

    /// The remaining-time feature makes the state space non-tabular.
    fn exact_model(&self) -> Option<TabularModel> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ChainWorld, GridWorld};

    #[test]
    fn zero_limit_rejected() {
        assert!(matches!(TimeLimit::new(ChainWorld::new(3).unwrap(), 0), Err(Error::Config(_))));
    }

    #[test]
    fn remaining_feature_counts_down() {
        let mut env = TimeLimit::new(GridWorld::open(5, 5).unwrap(), 10).unwrap();
        let s = env.reset(None);
        assert_eq!(*s.last().unwrap(), 1.0);
        for k in 1..=10usize {
            let step = env.step(&ActionValue::Discrete(0)).unwrap();
            assert_eq!(*step.next_state.last().unwrap(), (10 - k) as Real / 10.0);
            assert_eq!(step.done, k == 10);
            assert_eq!(step.truncated, k == 10);
        }
        assert!(env.step(&ActionValue::Discrete(0)).is_err());
    }

    #[test]
    fn inner_terminal_is_not_truncation() {
        let mut env = TimeLimit::new(ChainWorld::new(2).unwrap(), 1).unwrap();
        env.reset(None);
        let s = env.step(&ActionValue::Discrete(1)).unwrap();
        assert!(s.done && !s.truncated);
        assert!(env.exact_model().is_none());
    }
}
