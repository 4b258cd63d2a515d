//! On-policy estimators and the REINFORCE learner.

mod returns;

pub use returns::{
    advantage_td0, discounted_return, discounted_returns, gae, lambda_return, lambda_returns, mc_return, normalize,
    nstep_return_v,
};

use rand::Rng;

use crate::env::{ActionValue, Environment};
use crate::error::{Error, Result};
use crate::ndmath::{adam_step, mse_loss, Activation};
use crate::policy::PolicyHead;
use crate::{AdamState, Mlp, Real, Tensor};

/// Ratios beyond `[1e-6, 1e6]` are flagged as exploded.
pub const RATIO_LIMIT: Real = 1e6;

/// State-value network `V(s)`.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    net: Mlp,
}

impl ValueFunction {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, hidden: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        Ok(Self {
            net: Mlp::with_hidden(state_dim, hidden, 1, activation, rng)?,
        })
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::dim("value network output", 1, net.output_dim()));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn predict(&self, state: &[Real]) -> Result<Real> {
        Ok(self.net.forward(&Tensor::vector(state.to_vec()))?.data()[0])
    }

    pub fn predict_batch(&self, states: &Tensor) -> Result<Vec<Real>> {
        Ok(self.net.forward(states)?.into_data())
    }
}

/// MSE of `V(s_t)` against constant targets; gradients accumulate into `v`.
pub fn value_loss(v: &mut ValueFunction, states: &Tensor, targets: &[Real]) -> Result<Real> {
    let pred = v.net.forward_train(states)?;
    let target = Tensor::new(pred.shape().to_vec(), targets.to_vec())?;
    let (loss, grad) = mse_loss(&pred, &target)?;
    v.net.backward(&grad)?;
    Ok(loss)
}

/// `-mean_b log π(a_b|s_b) (G_b - b_b)`; gradients accumulate into the policy trunk.
pub fn reinforce_loss(
    head: &mut PolicyHead,
    states: &Tensor,
    actions: &[ActionValue],
    objectives: &[Real],
    baselines: Option<&[Real]>,
) -> Result<Real> {
    let b = states.rows();
    if actions.len() != b || objectives.len() != b || baselines.is_some_and(|x| x.len() != b) {
        return Err(Error::dim("reinforce batch", b, format!("{} actions, {} objectives", actions.len(), objectives.len())));
    }
    let weights: Vec<Real> = (0..b).map(|i| objectives[i] - baselines.map_or(0.0, |x| x[i])).collect();
    weighted_log_prob_loss(head, states, actions, &weights)
}

/// `-mean_b w_b log π(a_b|s_b)` with constant weights.
pub fn weighted_log_prob_loss(head: &mut PolicyHead, states: &Tensor, actions: &[ActionValue], weights: &[Real]) -> Result<Real> {
    let kind = head.kind();
    let out = head.trunk_mut().forward_train(states)?;
    let b = out.rows();
    let mut grad = Tensor::zeros(out.shape());
    let mut loss = 0.0;
    for i in 0..b {
        let (lp, g) = kind.log_prob_grad(out.row(i), &actions[i])?;
        loss -= weights[i] * lp;
        for (d, gk) in grad.row_mut(i).iter_mut().zip(g) {
            *d = -weights[i] * gk / b as Real;
        }
    }
    head.trunk_mut().backward(&grad)?;
    Ok(loss / b as Real)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceWeight {
    pub ratio: Real,
    /// Set when the ratio left `[1 / RATIO_LIMIT, RATIO_LIMIT]`.
    pub exploded: bool,
}

/// `π(a|s) / β(a|s)` from log-probabilities.
pub fn importance_weight(log_prob_now: Real, log_prob_behavior: Real) -> Result<ImportanceWeight> {
    if !log_prob_now.is_finite() || !log_prob_behavior.is_finite() {
        return Err(Error::Domain(format!(
            "log-probabilities must be finite: {log_prob_now}, {log_prob_behavior}"
        )));
    }
    let ratio = (log_prob_now - log_prob_behavior).exp();
    Ok(ImportanceWeight {
        ratio,
        exploded: !(1.0 / RATIO_LIMIT..=RATIO_LIMIT).contains(&ratio),
    })
}

/// One collected episode (or segment) with collection-time statistics.
#[derive(Debug, Clone, Default)]
pub struct EpisodeTrace {
    pub states: Vec<Vec<Real>>,
    pub actions: Vec<ActionValue>,
    pub rewards: Vec<Real>,
    pub log_probs: Vec<Real>,
    /// `V(s_0)..V(s_N)` when a value function was supplied.
    pub values: Vec<Real>,
    pub final_state: Vec<Real>,
    /// Ended in a true terminal (as opposed to a cut).
    pub terminal: bool,
}

impl EpisodeTrace {
    /// Samples actions from `head` until the episode ends or `max_steps` is hit.
    pub fn collect<E: Environment + ?Sized, R: Rng + ?Sized>(
        env: &mut E,
        head: &PolicyHead,
        value: Option<&ValueFunction>,
        seed: Option<u64>,
        max_steps: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut tr = EpisodeTrace::default();
        let mut s = env.reset(seed);
        for _ in 0..max_steps {
            let (a, lp) = head.sample(&s, rng)?;
            let step = env.step(&a)?;
            if let Some(v) = value {
                tr.values.push(v.predict(&s)?);
            }
            tr.states.push(std::mem::replace(&mut s, step.next_state));
            tr.actions.push(a);
            tr.rewards.push(step.reward);
            tr.log_probs.push(lp);
            if step.done {
                tr.terminal = !step.truncated;
                break;
            }
        }
        if let Some(v) = value {
            tr.values.push(v.predict(&s)?);
        }
        tr.final_state = s;
        if tr.rewards.is_empty() {
            return Err(Error::EpisodeState("empty episode".into()));
        }
        Ok(tr)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn total_reward(&self) -> Real {
        self.rewards.iter().sum()
    }

    /// Discounted return at every step, bootstrapping with the final value when cut.
    pub fn returns(&self, gamma: Real) -> Vec<Real> {
        let boot = if self.terminal { 0.0 } else { self.values.last().copied().unwrap_or(0.0) };
        discounted_returns(&self.rewards, boot, gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReinforceConfig {
    pub gamma: Real,
    pub policy_lr: Real,
    pub value_lr: Real,
    pub normalize_advantages: bool,
    pub max_episode_steps: usize,
}

impl Default for ReinforceConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            policy_lr: 3e-4,
            value_lr: 1e-3,
            normalize_advantages: false,
            max_episode_steps: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReinforceStats {
    pub policy_loss: Real,
    pub value_loss: Real,
    pub mean_return: Real,
    pub steps: usize,
}

/// REINFORCE with an optional learned state-value baseline.
#[derive(Debug, Clone)]
pub struct Reinforce {
    pub policy: PolicyHead,
    pub baseline: Option<ValueFunction>,
    pub config: ReinforceConfig,
    policy_opt: AdamState,
    value_opt: AdamState,
}

impl Reinforce {
    pub fn new(policy: PolicyHead, baseline: Option<ValueFunction>, config: ReinforceConfig) -> Self {
        Self {
            policy,
            baseline,
            policy_opt: AdamState::new(config.policy_lr),
            value_opt: AdamState::new(config.value_lr),
            config,
        }
    }

    pub fn collect<E: Environment + ?Sized, R: Rng + ?Sized>(&self, env: &mut E, seed: Option<u64>, rng: &mut R) -> Result<EpisodeTrace> {
        EpisodeTrace::collect(env, &self.policy, self.baseline.as_ref(), seed, self.config.max_episode_steps, rng)
    }

    /// One policy (and baseline) step on a batch of complete episodes.
    pub fn update(&mut self, traces: &[EpisodeTrace]) -> Result<ReinforceStats> {
        if traces.is_empty() {
            return Err(Error::Config("reinforce update needs at least one episode".into()));
        }
        let mut states = Vec::new();
        let mut actions = Vec::new();
        let mut objectives = Vec::new();
        let mut baselines = Vec::new();
        for tr in traces {
            states.extend(tr.states.iter().cloned());
            actions.extend(tr.actions.iter().cloned());
            objectives.extend(tr.returns(self.config.gamma));
            if self.baseline.is_some() {
                baselines.extend_from_slice(&tr.values[..tr.len()]);
            }
        }
        let states = Tensor::from_rows(&states)?;
        let mut weights: Vec<Real> = if self.baseline.is_some() {
            objectives.iter().zip(&baselines).map(|(g, b)| g - b).collect()
        } else {
            objectives.clone()
        };
        if self.config.normalize_advantages {
            normalize(&mut weights);
        }
        let policy_loss = weighted_log_prob_loss(&mut self.policy, &states, &actions, &weights)?;
        adam_step(self.policy.trunk_mut(), &mut self.policy_opt)?;
        let mut vloss = 0.0;
        if let Some(v) = self.baseline.as_mut() {
            vloss = value_loss(v, &states, &objectives)?;
            adam_step(v.net_mut(), &mut self.value_opt)?;
        }
        Ok(ReinforceStats {
            policy_loss,
            value_loss: vloss,
            mean_return: traces.iter().map(EpisodeTrace::total_reward).sum::<Real>() / traces.len() as Real,
            steps: objectives.len(),
        })
    }
}
