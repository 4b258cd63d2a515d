//! Planning with exact models and reward-conditioned supervised learning:
//! exhaustive tree search, Monte-Carlo tree search with UCT, and
//! upside-down RL.

mod mcts;
mod search;
mod updown;

pub use mcts::{mcts, select_uct, uct_score, Mcts, MctsConfig, RootRule, SearchNode};
pub use search::{exhaustive_search, SearchResult, TIE_TOLERANCE};
pub use updown::{
    command_input, episode_samples, random_command_samples, upside_down_loss, CommandSample, UpsideDownConfig, UpsideDownLearner,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::TabularModel;
use crate::error::Result;
use crate::seeding::derive_indexed;
use crate::Real;

/// Agreement of MCTS and uniform random choices with the exhaustive optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementRow {
    pub env: String,
    pub budget: usize,
    pub trials: usize,
    pub optimal_action: usize,
    pub mcts_agreement: Real,
    pub random_agreement: Real,
}

impl AgreementRow {
    pub const CSV_HEADER: &'static str = "env,budget,trials,optimal_action,mcts_agreement,random_agreement";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.env, self.budget, self.trials, self.optimal_action, self.mcts_agreement, self.random_agreement
        )
    }
}

/// Runs `trials` independently seeded searches from the model's start state.
///
/// A trial agrees when its action is optimal over the exhaustive horizon;
/// with tied optima any of them counts.
pub fn head_to_head(env: &str, model: &TabularModel, budget: usize, trials: usize, horizon: usize, config: &MctsConfig, seed: u64) -> Result<AgreementRow> {
    let start = model.start();
    let best = exhaustive_search(model, start, horizon, config.gamma, 50_000_000)?;
    let (mut m_ok, mut r_ok) = (0usize, 0usize);
    for k in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_indexed(seed, "plan-trial", k as u64));
        if best.is_optimal(mcts(model, start, budget, config, &mut rng)?) {
            m_ok += 1;
        }
        if best.is_optimal(rng.random_range(0..model.num_actions())) {
            r_ok += 1;
        }
    }
    let t = trials.max(1) as Real;
    Ok(AgreementRow {
        env: env.to_string(),
        budget,
        trials,
        optimal_action: best.action,
        mcts_agreement: m_ok as Real / t,
        random_agreement: r_ok as Real / t,
    })
}
