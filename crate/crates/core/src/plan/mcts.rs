use rand::Rng;

use crate::env::TabularModel;
use crate::error::{Error, Result};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootRule {
    MaxVisits,
    MaxMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MctsConfig {
    /// UCT exploration constant.
    pub exploration: Real,
    pub gamma: Real,
    /// Cap on tree depth plus simulation length.
    pub max_depth: usize,
    pub root_rule: RootRule,
}

impl Default for MctsConfig {
    fn default() -> Self {
        Self {
            exploration: std::f64::consts::SQRT_2,
            gamma: 0.95,
            max_depth: 100,
            root_rule: RootRule::MaxVisits,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    pub state: usize,
    pub parent: Option<usize>,
    pub children: Vec<Option<usize>>,
    pub visits: u64,
    /// Sum of the root-relative returns of simulations through this node.
    pub total_return: Real,
    pub unexpanded: Vec<usize>,
    pub terminal: bool,
    depth: usize,
    /// Discounted reward collected from the root down to this node.
    path_return: Real,
}

impl SearchNode {
    pub fn mean(&self) -> Real {
        if self.visits == 0 {
            0.0
        } else {
            self.total_return / self.visits as Real
        }
    }
}

/// UCT score `mean + c sqrt(ln N / n)`; unvisited children score +inf.
pub fn uct_score(mean: Real, visits: u64, parent_visits: u64, c: Real) -> Real {
    if visits == 0 {
        return Real::INFINITY;
    }
    mean + c * ((parent_visits.max(1) as Real).ln() / visits as Real).sqrt()
}

/// Index of the UCT-best child stats `(mean, visits)`; ties go to the lowest index.
pub fn select_uct(children: &[(Real, u64)], parent_visits: u64, c: Real) -> usize {
    let mut best = (0, Real::NEG_INFINITY);
    for (i, &(m, n)) in children.iter().enumerate() {
        let s = uct_score(m, n, parent_visits, c);
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// Monte-Carlo tree search over an exact model with a uniform default policy.
///
/// Every node accumulates the discounted return measured from the root, so
/// one simulation adds the same `G` along its whole path.
#[derive(Debug, Clone)]
pub struct Mcts<'m> {
    model: &'m TabularModel,
    config: MctsConfig,
    nodes: Vec<SearchNode>,
    root: usize,
}

impl<'m> Mcts<'m> {
    pub fn new(model: &'m TabularModel, state: usize, config: MctsConfig) -> Result<Self> {
        if state >= model.num_states() {
            return Err(Error::Index {
                index: state,
                len: model.num_states(),
            });
        }
        if config.max_depth == 0 {
            return Err(Error::Config("mcts max_depth must be >= 1".into()));
        }
        if !(config.gamma > 0.0 && config.gamma <= 1.0) {
            return Err(Error::Config(format!("mcts gamma must lie in (0, 1], got {}", config.gamma)));
        }
        let mut t = Self {
            model,
            config,
            nodes: Vec::new(),
            root: 0,
        };
        t.nodes.push(t.make_node(state, None, 0, 0.0));
        Ok(t)
    }

    fn make_node(&self, state: usize, parent: Option<usize>, depth: usize, path_return: Real) -> SearchNode {
        let terminal = self.model.is_terminal(state);
        let na = self.model.num_actions();
        SearchNode {
            state,
            parent,
            children: vec![None; na],
            visits: 0,
            total_return: 0.0,
            unexpanded: if terminal { Vec::new() } else { (0..na).collect() },
            terminal,
            depth,
            path_return,
        }
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[self.root]
    }

    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &SearchNode {
        &self.nodes[i]
    }

    /// One selection / expansion / simulation / backup pass; returns
    /// the backed-up return and the path of node indices from the root.
    pub fn iterate<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (Real, Vec<usize>) {
        let c = self.config.exploration;
        let gamma = self.config.gamma;
        let mut path = vec![self.root];
        let mut cur = self.root;
        // selection
        while !self.nodes[cur].terminal && self.nodes[cur].unexpanded.is_empty() && self.nodes[cur].depth < self.config.max_depth {
            let n = &self.nodes[cur];
            let stats: Vec<(Real, u64)> = n
                .children
                .iter()
                .map(|ch| ch.map_or((0.0, 0), |i| (self.nodes[i].mean(), self.nodes[i].visits)))
                .collect();
            let a = select_uct(&stats, n.visits, c);
            cur = n.children[a].expect("fully expanded");
            path.push(cur);
        }
        // expansion
        if !self.nodes[cur].terminal && !self.nodes[cur].unexpanded.is_empty() && self.nodes[cur].depth < self.config.max_depth {
            let k = rng.random_range(0..self.nodes[cur].unexpanded.len());
            let a = self.nodes[cur].unexpanded.swap_remove(k);
            let (s, d, pr) = (self.nodes[cur].state, self.nodes[cur].depth, self.nodes[cur].path_return);
            let (next, r, _) = self.model.transition(s, a);
            let child = self.make_node(next, Some(cur), d + 1, pr + gamma.powi(d as i32) * r);
            self.nodes.push(child);
            let idx = self.nodes.len() - 1;
            self.nodes[cur].children[a] = Some(idx);
            cur = idx;
            path.push(cur);
        }
        // simulation
        let leaf = &self.nodes[cur];
        let mut g = leaf.path_return;
        let mut s = leaf.state;
        let mut depth = leaf.depth;
        let mut terminal = leaf.terminal;
        while !terminal && depth < self.config.max_depth {
            let a = rng.random_range(0..self.model.num_actions());
            let (n, r, t) = self.model.transition(s, a);
            g += gamma.powi(depth as i32) * r;
            s = n;
            terminal = t;
            depth += 1;
        }
        // backup
        for &i in &path {
            self.nodes[i].visits += 1;
            self.nodes[i].total_return += g;
        }
        (g, path)
    }

    /// Runs `budget` iterations and returns the chosen root action.
    pub fn search<R: Rng + ?Sized>(&mut self, budget: usize, rng: &mut R) -> Result<usize> {
        if budget < 1 {
            return Err(Error::Config("mcts budget must be >= 1".into()));
        }
        if self.root().terminal {
            return Err(Error::EpisodeState(format!("state {} is terminal", self.root().state)));
        }
        for _ in 0..budget {
            self.iterate(rng);
        }
        Ok(self.best_action())
    }

    /// Root action by the configured rule; ties go to the lowest index.
    pub fn best_action(&self) -> usize {
        let root = self.root();
        let mut best = (0, Real::NEG_INFINITY);
        for (a, ch) in root.children.iter().enumerate() {
            let Some(i) = ch else { continue };
            let n = &self.nodes[*i];
            let score = match self.config.root_rule {
                RootRule::MaxVisits => n.visits as Real,
                RootRule::MaxMean => n.mean(),
            };
            if score > best.1 {
                best = (a, score);
            }
        }
        best.0
    }

    /// Makes the child reached by `action` the new root, keeping its subtree.
    ///
    /// Statistics below the new root are rebased so returns are measured from
    /// it; an unexplored action starts a fresh tree.
    pub fn advance(&mut self, action: usize) -> Result<()> {
        let na = self.model.num_actions();
        if action >= na {
            return Err(Error::Index { index: action, len: na });
        }
        let root = &self.nodes[self.root];
        let Some(new_root) = root.children[action] else {
            let (next, _, _) = self.model.transition(root.state, action);
            self.nodes = vec![self.make_node(next, None, 0, 0.0)];
            self.root = 0;
            return Ok(());
        };
        let gamma = self.config.gamma;
        let shift = self.nodes[new_root].path_return;
        let mut kept = Vec::new();
        let mut map = vec![usize::MAX; self.nodes.len()];
        let mut queue = std::collections::VecDeque::from([new_root]);
        while let Some(i) = queue.pop_front() {
            map[i] = kept.len();
            kept.push(i);
            queue.extend(self.nodes[i].children.iter().flatten());
        }
        let old = std::mem::take(&mut self.nodes);
        self.nodes = kept
            .iter()
            .map(|&i| {
                let n = &old[i];
                let depth = n.depth - 1;
                // G_old = shift + γ G_new for every simulation through the new root
                SearchNode {
                    state: n.state,
                    parent: if i == new_root { None } else { n.parent.map(|p| map[p]) },
                    children: n.children.iter().map(|c| c.map(|c| map[c])).collect(),
                    visits: n.visits,
                    total_return: (n.total_return - shift * n.visits as Real) / gamma,
                    unexpanded: n.unexpanded.clone(),
                    terminal: n.terminal,
                    depth,
                    path_return: (n.path_return - shift) / gamma,
                }
            })
            .collect();
        self.root = 0;
        Ok(())
    }
}

/// Fresh-tree MCTS decision from `state`.
pub fn mcts<R: Rng + ?Sized>(model: &TabularModel, state: usize, budget: usize, config: &MctsConfig, rng: &mut R) -> Result<usize> {
    Mcts::new(model, state, *config)?.search(budget, rng)
}
