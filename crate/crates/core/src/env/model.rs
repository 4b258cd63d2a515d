use crate::Real;

/// Exact deterministic dynamics over `(state index, action index)`.
#[derive(Debug, Clone)]
pub struct TabularModel {
    num_states: usize,
    num_actions: usize,
    start: usize,
    next: Vec<usize>,
    reward: Vec<Real>,
    terminal: Vec<bool>,
    observations: Vec<Vec<Real>>,
}

impl TabularModel {
    /// Builds a model by evaluating `f(s, a) -> (s', r)` on every pair.
    ///
    /// Terminal states are absorbing; `f` is never called for them.
    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        start: usize,
        terminal: Vec<bool>,
        observations: Vec<Vec<Real>>,
        mut f: impl FnMut(usize, usize) -> (usize, Real),
    ) -> Self {
        assert_eq!(terminal.len(), num_states);
        assert_eq!(observations.len(), num_states);
        let mut next = Vec::with_capacity(num_states * num_actions);
        let mut reward = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                let (n, r) = if terminal[s] { (s, 0.0) } else { f(s, a) };
                next.push(n);
                reward.push(r);
            }
        }
        Self {
            num_states,
            num_actions,
            start,
            next,
            reward,
            terminal,
            observations,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// `(next state, reward, next state is terminal)`.
    pub fn transition(&self, s: usize, a: usize) -> (usize, Real, bool) {
        let i = s * self.num_actions + a;
        let n = self.next[i];
        (n, self.reward[i], self.terminal[n])
    }

    pub fn reward(&self, s: usize, a: usize) -> Real {
        self.reward[s * self.num_actions + a]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn observation(&self, s: usize) -> &[Real] {
        &self.observations[s]
    }

    /// Index of the state whose observation equals `obs`.
    pub fn state_of(&self, obs: &[Real]) -> Option<usize> {
        self.observations.iter().position(|o| o.as_slice() == obs)
    }

    /// Optimal action values by synchronous value iteration.
    ///
    /// Returns `Q[s][a]` and the number of sweeps; stops once the sup-norm
    /// change of a sweep drops below `tol`.
    pub fn value_iteration(&self, gamma: Real, tol: Real, max_sweeps: usize) -> (Vec<Vec<Real>>, usize) {
        let mut q = vec![vec![0.0; self.num_actions]; self.num_states];
        for sweep in 1..=max_sweeps {
            let v: Vec<Real> = q
                .iter()
                .map(|row| row.iter().copied().fold(Real::NEG_INFINITY, Real::max))
                .collect();
            let mut delta: Real = 0.0;
            for s in 0..self.num_states {
                if self.terminal[s] {
                    continue;
                }
                for a in 0..self.num_actions {
                    let (n, r, term) = self.transition(s, a);
                    let target = if term { r } else { r + gamma * v[n] };
                    delta = delta.max((target - q[s][a]).abs());
                    q[s][a] = target;
                }
            }
            if delta < tol {
                return (q, sweep);
            }
        }
        (q, max_sweeps)
    }
}
