use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{one_hot, ActionKind, ActionValue, EnvSpec, Environment, Phase, Step, TabularModel};
use crate::error::{Error, Result};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [GridAction::Up, GridAction::Down, GridAction::Left, GridAction::Right];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWorldConfig {
    pub width: usize,
    pub height: usize,
    pub obstacles: Vec<(usize, usize)>,
    pub goal: (usize, usize),
    /// `None` draws the start uniformly from free non-goal cells.
    pub start: Option<(usize, usize)>,
    pub step_penalty: Real,
}

impl GridWorldConfig {
    /// Open grid, start in the top-left corner, goal in the bottom-right one.
    pub fn open(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            obstacles: Vec::new(),
            goal: (width.saturating_sub(1), height.saturating_sub(1)),
            start: Some((0, 0)),
            step_penalty: 0.01,
        }
    }
}

/// Rectangular grid with coordinates `(x, y)`, `x` the column and `y` the row;
/// "up" decreases `y`. Walls and obstacles block moves without ending the
/// episode. Observations are one-hot over all `width * height` cells.
#[derive(Debug, Clone)]
pub struct GridWorld {
    cfg: GridWorldConfig,
    blocked: Vec<bool>,
    pos: (usize, usize),
    rng: ChaCha8Rng,
    phase: Phase,
}

impl GridWorld {
    pub fn new(cfg: GridWorldConfig) -> Result<Self> {
        let (w, h) = (cfg.width, cfg.height);
        if w == 0 || h == 0 || w * h < 2 {
            return Err(Error::Config(format!("grid {w}x{h} is too small")));
        }
        let inside = |(x, y): (usize, usize)| x < w && y < h;
        let mut blocked = vec![false; w * h];
        for &o in &cfg.obstacles {
            if !inside(o) {
                return Err(Error::Config(format!("obstacle {o:?} outside grid")));
            }
            blocked[o.1 * w + o.0] = true;
        }
        if !inside(cfg.goal) || blocked[cfg.goal.1 * w + cfg.goal.0] {
            return Err(Error::Config(format!("goal {:?} is not a free cell", cfg.goal)));
        }
        if let Some(s) = cfg.start {
            if !inside(s) || blocked[s.1 * w + s.0] || s == cfg.goal {
                return Err(Error::Config(format!("start {s:?} is not a free non-goal cell")));
            }
        }
        Ok(Self {
            pos: cfg.start.unwrap_or((0, 0)),
            cfg,
            blocked,
            rng: ChaCha8Rng::seed_from_u64(0),
            phase: Phase::NeedsReset,
        })
    }

    pub fn open(width: usize, height: usize) -> Result<Self> {
        Self::new(GridWorldConfig::open(width, height))
    }

    pub fn config(&self) -> &GridWorldConfig {
        &self.cfg
    }

    pub fn position(&self) -> (usize, usize) {
        self.pos
    }

    pub fn num_cells(&self) -> usize {
        self.cfg.width * self.cfg.height
    }

    pub fn cell_index(&self, (x, y): (usize, usize)) -> usize {
        y * self.cfg.width + x
    }

    pub fn cell_of(&self, index: usize) -> (usize, usize) {
        (index % self.cfg.width, index / self.cfg.width)
    }

    pub fn is_blocked(&self, (x, y): (usize, usize)) -> bool {
        self.blocked[y * self.cfg.width + x]
    }

    pub fn observe(&self, cell: (usize, usize)) -> Vec<Real> {
        one_hot(self.cell_index(cell), self.num_cells())
    }

    fn free_starts(&self) -> Vec<(usize, usize)> {
        (0..self.num_cells())
            .map(|i| self.cell_of(i))
            .filter(|&c| !self.is_blocked(c) && c != self.cfg.goal)
            .collect()
    }

    fn rule(&self, (x, y): (usize, usize), action: usize) -> ((usize, usize), Real) {
        let (w, h) = (self.cfg.width, self.cfg.height);
        let target = match action {
            0 if y > 0 => (x, y - 1),
            1 if y + 1 < h => (x, y + 1),
            2 if x > 0 => (x - 1, y),
            3 if x + 1 < w => (x + 1, y),
            _ => (x, y),
        };
        let next = if self.is_blocked(target) { (x, y) } else { target };
        let reward = if next == self.cfg.goal { 1.0 } else { -self.cfg.step_penalty };
        (next, reward)
    }
}

impl Environment for GridWorld {
    fn name(&self) -> &str {
        "grid"
    }

    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: self.num_cells(),
            action_kind: ActionKind::Discrete(4),
            max_episode_steps: None,
        }
    }

    fn reset(&mut self, seed: Option<u64>) -> Vec<Real> {
        if let Some(s) = seed {
            self.rng = ChaCha8Rng::seed_from_u64(s);
        }
        self.pos = match self.cfg.start {
            Some(s) => s,
            None => {
                let free = self.free_starts();
                free[self.rng.random_range(0..free.len())]
            }
        };
        self.phase = Phase::Running;
        self.observe(self.pos)
    }

    fn step(&mut self, action: &ActionValue) -> Result<Step> {
        self.phase.check_step("grid")?;
        self.spec().action_kind.validate(action)?;
        let (next, reward) = self.rule(self.pos, action.discrete().expect("validated"));
        self.pos = next;
        let done = next == self.cfg.goal;
        if done {
            self.phase = Phase::Done;
        }
        Ok(Step {
            next_state: self.observe(next),
            reward,
            done,
            truncated: false,
        })
    }

    fn reward_range(&self) -> (Real, Real) {
        let p = -self.cfg.step_penalty;
        (p.min(1.0), p.max(1.0))
    }

    fn exact_model(&self) -> Option<TabularModel> {
        let n = self.num_cells();
        let goal = self.cell_index(self.cfg.goal);
        let terminal = (0..n).map(|i| i == goal).collect();
        let obs = (0..n).map(|i| one_hot(i, n)).collect();
        let start = self.cell_index(self.cfg.start.unwrap_or(self.pos));
        Some(TabularModel::from_fn(n, 4, start, terminal, obs, |s, a| {
            let (next, r) = self.rule(self.cell_of(s), a);
            (self.cell_index(next), r)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_from_origin() {
        let mut env = GridWorld::open(4, 4).unwrap();
        env.reset(None);
        let s = env.step(&ActionValue::Discrete(GridAction::Right.index())).unwrap();
        assert_eq!(env.position(), (1, 0));
        assert_eq!(s.next_state, env.observe((1, 0)));
        assert_eq!((s.reward, s.done), (-0.01, false));
    }

    #[test]
    fn wall_bump_is_self_loop_in_model() {
        let env = GridWorld::open(4, 4).unwrap();
        let m = env.exact_model().unwrap();
        assert_eq!(m.transition(0, GridAction::Up.index()).0, 0);
        assert_eq!(m.transition(0, GridAction::Left.index()).0, 0);
    }

    #[test]
    fn obstacle_blocks_move() {
        let mut cfg = GridWorldConfig::open(3, 3);
        cfg.obstacles.push((1, 0));
        let mut env = GridWorld::new(cfg).unwrap();
        env.reset(None);
        env.step(&ActionValue::Discrete(GridAction::Right.index())).unwrap();
        assert_eq!(env.position(), (0, 0));
    }

    #[test]
    fn goal_pays_one_and_ends() {
        let mut env = GridWorld::open(2, 1).unwrap();
        env.reset(None);
        let s = env.step(&ActionValue::Discrete(GridAction::Right.index())).unwrap();
        assert_eq!((s.reward, s.done), (1.0, true));
    }

    #[test]
    fn seeded_random_start_repeats() {
        let mut cfg = GridWorldConfig::open(4, 4);
        cfg.start = None;
        let mut env = GridWorld::new(cfg).unwrap();
        assert_eq!(env.reset(Some(3)), env.reset(Some(3)));
    }

    #[test]
    fn value_iteration_converges_and_matches_shortest_path() {
        let env = GridWorld::open(4, 4).unwrap();
        let m = env.exact_model().unwrap();
        let gamma = 0.9;
        let (q, sweeps) = m.value_iteration(gamma, 1e-10, 10_000);
        assert!(sweeps < 10_000);
        // oracle: Manhattan distance d from the start gives d-1 penalties then +1
        let d = 6;
        let expected: Real = (0..d - 1).map(|k| -0.01 * gamma.powi(k)).sum::<Real>() + gamma.powi(d - 1);
        let v0 = q[0].iter().copied().fold(Real::NEG_INFINITY, Real::max);
        assert!((v0 - expected).abs() < 1e-9);
    }
}
