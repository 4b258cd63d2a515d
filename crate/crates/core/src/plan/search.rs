use crate::env::TabularModel;
use crate::error::{Error, Result};
use crate::Real;

/// Outcome of a full enumeration from one state.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub action: usize,
    /// Best discounted return over the horizon.
    pub value: Real,
    /// Value of each root action over the horizon.
    pub action_values: Vec<Real>,
    pub nodes: usize,
}

/// Tolerance under which two root values count as tied.
pub const TIE_TOLERANCE: Real = 1e-9;

impl SearchResult {
    /// True when `action` attains the optimum up to [`TIE_TOLERANCE`].
    pub fn is_optimal(&self, action: usize) -> bool {
        self.action_values.get(action).is_some_and(|&v| v >= self.value - TIE_TOLERANCE)
    }
}

/// Enumerates every action sequence up to `horizon` steps (or a terminal)
/// and returns the first action of the best one. Ties go to the lowest index.
///
/// Fails with [`Error::Budget`] once more than `node_budget` nodes were visited.
pub fn exhaustive_search(model: &TabularModel, state: usize, horizon: usize, gamma: Real, node_budget: usize) -> Result<SearchResult> {
    if horizon == 0 {
        return Err(Error::Config("search horizon must be >= 1".into()));
    }
    if state >= model.num_states() {
        return Err(Error::Index {
            index: state,
            len: model.num_states(),
        });
    }
    if model.is_terminal(state) {
        return Err(Error::EpisodeState(format!("state {state} is terminal")));
    }
    let mut nodes = 1;
    let mut best = (0, Real::NEG_INFINITY);
    let mut action_values = Vec::with_capacity(model.num_actions());
    for a in 0..model.num_actions() {
        let (n, r, term) = model.transition(state, a);
        let v = r + if term { 0.0 } else { gamma * subtree(model, n, horizon - 1, gamma, &mut nodes, node_budget)? };
        action_values.push(v);
        if v > best.1 {
            best = (a, v);
        }
    }
    Ok(SearchResult {
        action: best.0,
        value: best.1,
        action_values,
        nodes,
    })
}

fn subtree(model: &TabularModel, s: usize, depth: usize, gamma: Real, nodes: &mut usize, budget: usize) -> Result<Real> {
    *nodes += 1;
    if *nodes > budget {
        return Err(Error::Budget(format!("exhaustive search visited more than {budget} nodes")));
    }
    if depth == 0 {
        return Ok(0.0);
    }
    let mut best = Real::NEG_INFINITY;
    for a in 0..model.num_actions() {
        let (n, r, term) = model.transition(s, a);
        let v = r + if term { 0.0 } else { gamma * subtree(model, n, depth - 1, gamma, nodes, budget)? };
        best = best.max(v);
    }
    Ok(best)
}
