use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::env::{ActionKind, ActionValue};
use crate::error::{Error, Result};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decay {
    /// Straight line from `start` to `end`, flat afterwards.
    Linear,
    /// `end + (start - end) exp(-5 t / decay_steps)`.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExplorationKind {
    EpsilonGreedy {
        start: Real,
        end: Real,
        decay_steps: u64,
        decay: Decay,
    },
    GaussianNoise {
        sigma: Real,
    },
}

#[derive(Debug, Clone)]
pub struct ExplorationSchedule {
    kind: ExplorationKind,
    step: u64,
}

impl ExplorationSchedule {
    pub fn new(kind: ExplorationKind) -> Result<Self> {
        match kind {
            ExplorationKind::EpsilonGreedy { start, end, .. } => {
                if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) {
                    return Err(Error::Config(format!("epsilon must lie in [0, 1]: {start} -> {end}")));
                }
            }
            ExplorationKind::GaussianNoise { sigma } => {
                if !(sigma >= 0.0) {
                    return Err(Error::Config(format!("noise sigma must be >= 0, got {sigma}")));
                }
            }
        }
        Ok(Self { kind, step: 0 })
    }

    pub fn linear(start: Real, end: Real, decay_steps: u64) -> Result<Self> {
        Self::new(ExplorationKind::EpsilonGreedy {
            start,
            end,
            decay_steps,
            decay: Decay::Linear,
        })
    }

    pub fn gaussian(sigma: Real) -> Result<Self> {
        Self::new(ExplorationKind::GaussianNoise { sigma })
    }

    pub fn kind(&self) -> ExplorationKind {
        self.kind
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Current ε, or 0 for noise schedules.
    pub fn epsilon(&self) -> Real {
        match self.kind {
            ExplorationKind::EpsilonGreedy {
                start,
                end,
                decay_steps,
                decay,
            } => {
                if decay_steps == 0 {
                    return end;
                }
                let t = self.step as Real / decay_steps as Real;
                let eps = match decay {
                    Decay::Linear => start + (end - start) * t.min(1.0),
                    Decay::Exponential => end + (start - end) * (-5.0 * t).exp(),
                };
                eps.clamp(0.0, 1.0)
            }
            ExplorationKind::GaussianNoise { .. } => 0.0,
        }
    }

    /// Perturbs the greedy action and advances the step counter.
    pub fn explore<R: Rng + ?Sized>(&mut self, greedy: &ActionValue, space: &ActionKind, rng: &mut R) -> Result<ActionValue> {
        let out = match (self.kind, space) {
            (ExplorationKind::EpsilonGreedy { .. }, ActionKind::Discrete(n)) => {
                if rng.random::<Real>() < self.epsilon() {
                    ActionValue::Discrete(rng.random_range(0..*n))
                } else {
                    greedy.clone()
                }
            }
            (ExplorationKind::GaussianNoise { sigma }, ActionKind::Continuous { low, high, .. }) => {
                let a = greedy
                    .continuous()
                    .ok_or_else(|| Error::Config("gaussian noise needs a continuous greedy action".into()))?;
                ActionValue::Continuous(
                    a.iter()
                        .enumerate()
                        .map(|(i, &x)| {
                            let xi: Real = StandardNormal.sample(rng);
                            (x + sigma * xi).clamp(low[i], high[i])
                        })
                        .collect(),
                )
            }
            (kind, space) => {
                return Err(Error::Config(format!("{kind:?} cannot explore in {space:?}")));
            }
        };
        self.step += 1;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_midpoint() {
        let mut s = ExplorationSchedule::linear(1.0, 0.1, 100).unwrap();
        s.set_step(50);
        assert!((s.epsilon() - 0.55).abs() < 1e-12);
        s.set_step(1000);
        assert!((s.epsilon() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_epsilon_is_greedy() {
        let mut s = ExplorationSchedule::linear(0.0, 0.0, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let a = s.explore(&ActionValue::Discrete(2), &ActionKind::Discrete(4), &mut rng).unwrap();
            assert_eq!(a, ActionValue::Discrete(2));
        }
        assert_eq!(s.step(), 200);
    }

    #[test]
    fn full_epsilon_is_uniform() {
        let mut s = ExplorationSchedule::linear(1.0, 1.0, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            let a = s.explore(&ActionValue::Discrete(0), &ActionKind::Discrete(4), &mut rng).unwrap();
            counts[a.discrete().unwrap()] += 1;
        }
        for c in counts {
            assert!((c as Real / n as Real - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn exponential_stays_in_unit_interval() {
        let mut s = ExplorationSchedule::new(ExplorationKind::EpsilonGreedy {
            start: 1.0,
            end: 0.05,
            decay_steps: 10,
            decay: Decay::Exponential,
        })
        .unwrap();
        let mut prev = 1.0;
        for t in 0..50 {
            s.set_step(t);
            let e = s.epsilon();
            assert!((0.0..=1.0).contains(&e) && e <= prev);
            prev = e;
        }
    }

    #[test]
    fn noise_is_clipped_and_mismatch_rejected() {
        let mut s = ExplorationSchedule::gaussian(5.0).unwrap();
        let space = ActionKind::continuous_uniform(1, -1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a = s.explore(&ActionValue::Continuous(vec![0.9]), &space, &mut rng).unwrap();
            assert!(a.continuous().unwrap()[0].abs() <= 1.0);
        }
        assert!(matches!(
            s.explore(&ActionValue::Discrete(0), &ActionKind::Discrete(2), &mut rng),
            Err(Error::Config(_))
        ));
        assert!(ExplorationSchedule::gaussian(-1.0).is_err());
    }
}
