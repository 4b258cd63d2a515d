//! Soft Actor-Critic for continuous actions: twin critics with Polyak
//! targets, a tanh-squashed Gaussian actor trained through the
//! reparametrised sample, and automatic temperature tuning.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::buffer::ReplayBuffer;
use crate::env::{ActionKind, ActionValue, Environment, Transition};
use crate::error::{Error, Result};
use crate::ndmath::{adam_step, Activation, ScalarParam};
use crate::policy::{HeadKind, PolicyHead, LOG_STD_MAX, LOG_STD_MIN, SQUASH_EPS};
use crate::value::{ActionCritic, QFunction, QMode, TargetNetwork, TargetUpdate};
use crate::{AdamState, Mlp, Real, Tensor};

const HALF_LN_2PI: Real = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateCadence {
    /// One gradient update per environment step once warm.
    PerStep,
    /// One gradient update per collected episode.
    PerEpisode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub gamma: Real,
    pub tau: Real,
    pub actor_lr: Real,
    pub critic_lr: Real,
    pub alpha_lr: Real,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub initial_alpha: Real,
    /// Defaults to minus the action dimension.
    pub target_entropy: Option<Real>,
    pub cadence: UpdateCadence,
    pub bootstrap_on_truncation: bool,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.995,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            batch_size: 256,
            warmup_steps: 1000,
            buffer_capacity: 100_000,
            hidden: vec![64, 64],
            initial_alpha: 1.0,
            target_entropy: None,
            cadence: UpdateCadence::PerStep,
            bootstrap_on_truncation: true,
        }
    }
}

/// Per-update losses and statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SacUpdate {
    pub critic1_loss: Real,
    pub critic2_loss: Real,
    pub actor_loss: Real,
    pub alpha: Real,
    /// `-mean log π(a|s)` over the actor minibatch.
    pub entropy: Real,
}

/// Actor loss on one row with frozen noise.
///
/// `out` is the raw actor output `[μ; log σ]`, `dq_da` the gradient of the
/// smaller critic at the squashed action. Returns `(log π, action, d/d out)`
/// for `α log π(a|s) - Q_min(s, a)` through the reparametrised action.
pub fn actor_row_grad(out: &[Real], xi: &[Real], dq_da: &[Real], alpha: Real) -> (Real, Vec<Real>, Vec<Real>) {
    let d = xi.len();
    let mut log_prob = 0.0;
    let mut grad = vec![0.0; 2 * d];
    let mut action = vec![0.0; d];
    for i in 0..d {
        let raw = out[d + i];
        let (ls, mask) = if raw < LOG_STD_MIN {
            (LOG_STD_MIN, 0.0)
        } else if raw > LOG_STD_MAX {
            (LOG_STD_MAX, 0.0)
        } else {
            (raw, 1.0)
        };
        let sigma = ls.exp();
        let u = out[i] + sigma * xi[i];
        let t = u.tanh();
        let one_m = 1.0 - t * t;
        log_prob += -0.5 * xi[i] * xi[i] - ls - HALF_LN_2PI - (one_m + SQUASH_EPS).ln();
        // d log π / du from the squash correction
        let dlp_du = 2.0 * t * one_m / (one_m + SQUASH_EPS);
        let dl_du = alpha * dlp_du - dq_da[i] * one_m;
        grad[i] = dl_du;
        grad[d + i] = mask * (-alpha + dl_du * sigma * xi[i]);
        action[i] = t;
    }
    (log_prob, action, grad)
}

/// `dL_α / d log α` for `L_α = -α (log π + H̄)` with `log π` held constant.
pub fn temperature_grad(alpha: Real, log_probs: &[Real], target_entropy: Real) -> Real {
    let n = log_probs.len().max(1) as Real;
    -alpha * log_probs.iter().map(|lp| lp + target_entropy).sum::<Real>() / n
}

/// Accumulates actor gradients of `mean(α log π(a|s) - min(Q1, Q2)(s, a))`
/// with `a = tanh(μ + σ ξ)` for the given noise, without stepping.
///
/// Returns `(loss, log π per row)`. Critic parameters are untouched.
pub fn actor_loss_grad(
    actor: &mut PolicyHead,
    q1: &mut dyn ActionCritic,
    q2: &mut dyn ActionCritic,
    states: &Tensor,
    xi: &Tensor,
    alpha: Real,
) -> Result<(Real, Vec<Real>)> {
    let d = match actor.kind() {
        HeadKind::TanhGaussian(d) => d,
        other => return Err(Error::Config(format!("sac actor must be tanh-gaussian, got {other:?}"))),
    };
    let states = if states.rank() == 1 {
        states.clone().reshape(vec![1, states.len()])?
    } else {
        states.clone()
    };
    let b = states.rows();
    if b == 0 {
        return Err(Error::Config("empty sac minibatch".into()));
    }
    if xi.shape() != [b, d] {
        return Err(Error::dim("actor noise", format!("[{b}, {d}]"), format!("{:?}", xi.shape())));
    }
    let out = actor.trunk_mut().forward_train(&states)?;
    let mut actions = Vec::with_capacity(b * d);
    for i in 0..b {
        let row = out.row(i);
        for k in 0..d {
            let ls = row[d + k].clamp(LOG_STD_MIN, LOG_STD_MAX);
            actions.push((row[k] + ls.exp() * xi.row(i)[k]).tanh());
        }
    }
    let actions = Tensor::matrix(b, d, actions)?;
    let (v1, g1) = q1.q_and_action_grad(&states, &actions)?;
    let (v2, g2) = q2.q_and_action_grad(&states, &actions)?;
    let mut grad = Tensor::zeros(out.shape());
    let mut loss = 0.0;
    let mut lps = Vec::with_capacity(b);
    for i in 0..b {
        let (qmin, dq) = if v1[i] <= v2[i] { (v1[i], g1.row(i)) } else { (v2[i], g2.row(i)) };
        let (lp, _, g) = actor_row_grad(out.row(i), xi.row(i), dq, alpha);
        loss += alpha * lp - qmin;
        lps.push(lp);
        for (dst, gk) in grad.row_mut(i).iter_mut().zip(g) {
            *dst = gk / b as Real;
        }
    }
    actor.trunk_mut().backward(&grad)?;
    Ok((loss / b as Real, lps))
}

fn pair_values(net: &Mlp, joint: &Tensor) -> Result<Vec<Real>> {
    Ok(net.forward(joint)?.into_data())
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub actor: PolicyHead,
    pub q1: QFunction,
    pub q2: QFunction,
    pub q1_target: TargetNetwork,
    pub q2_target: TargetNetwork,
    pub log_alpha: ScalarParam<Real>,
    pub target_entropy: Real,
    pub config: SacConfig,
    pub buffer: ReplayBuffer,
    actor_opt: AdamState,
    q1_opt: AdamState,
    q2_opt: AdamState,
    alpha_opt: AdamState,
    action_dim: usize,
    state_dim: usize,
}

impl SacAgent {
    /// Critics draw their initial weights one after the other from `rng`, so they differ.
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_kind: &ActionKind, config: SacConfig, rng: &mut R) -> Result<Self> {
        let action_dim = match action_kind {
            ActionKind::Continuous { dim, low, high } => {
                if low.iter().chain(high).any(|b| b.abs() != 1.0) {
                    return Err(Error::Config("sac expects actions bounded by [-1, 1]".into()));
                }
                *dim
            }
            ActionKind::Discrete(_) => {
                return Err(Error::Config("sac supports continuous action spaces only".into()));
            }
        };
        if config.batch_size == 0 {
            return Err(Error::Config("sac batch size must be >= 1".into()));
        }
        if !(config.initial_alpha > 0.0) {
            return Err(Error::Config("initial alpha must be positive".into()));
        }
        let act = Activation::Relu;
        let actor = PolicyHead::new(HeadKind::TanhGaussian(action_dim), state_dim, &config.hidden, act, rng)?;
        let mode = QMode::StateActionToScalar(action_dim);
        let q1 = QFunction::new(mode, state_dim, &config.hidden, act, rng)?;
        let q2 = QFunction::new(mode, state_dim, &config.hidden, act, rng)?;
        let q1_target = TargetNetwork::new(q1.net(), TargetUpdate::Polyak(config.tau))?;
        let q2_target = TargetNetwork::new(q2.net(), TargetUpdate::Polyak(config.tau))?;
        Ok(Self {
            actor,
            q1,
            q2,
            q1_target,
            q2_target,
            log_alpha: ScalarParam::new("log_alpha", config.initial_alpha.ln()),
            target_entropy: config.target_entropy.unwrap_or(-(action_dim as Real)),
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            actor_opt: AdamState::new(config.actor_lr),
            q1_opt: AdamState::new(config.critic_lr),
            q2_opt: AdamState::new(config.critic_lr),
            alpha_opt: AdamState::new(config.alpha_lr),
            action_dim,
            state_dim,
            config,
        })
    }

    pub fn alpha(&self) -> Real {
        self.log_alpha.value.exp()
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn noise<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Result<Tensor> {
        let data = (0..rows * self.action_dim).map(|_| StandardNormal.sample(rng)).collect();
        Tensor::matrix(rows, self.action_dim, data)
    }

    /// Soft bootstrap targets `r + γ (min_i Q'_i(s', a') - α log π(a'|s'))`, `a' = tanh(μ + σ ξ)`.
    pub fn critic_targets(&self, batch: &[&Transition], xi: &Tensor) -> Result<Vec<Real>> {
        if batch.is_empty() {
            return Err(Error::Config("empty sac minibatch".into()));
        }
        let next = Tensor::from_rows(&batch.iter().map(|t| t.next_state.as_slice()).collect::<Vec<_>>())?;
        let out = self.actor.trunk().forward(&next)?;
        let kind = self.actor.kind();
        let mut acts = Vec::with_capacity(batch.len() * self.action_dim);
        let mut lps = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            let (a, lp) = kind.sample_with(out.row(i), xi.row(i), 0.0)?;
            acts.extend(a.to_vec());
            lps.push(lp);
        }
        let acts = Tensor::matrix(batch.len(), self.action_dim, acts)?;
        let joint = self.q1.joint_input(&next, &acts)?;
        let t1 = pair_values(self.q1_target.net(), &joint)?;
        let t2 = pair_values(self.q2_target.net(), &joint)?;
        let alpha = self.alpha();
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mask = t.bootstrap_mask(self.config.bootstrap_on_truncation);
                if mask == 0.0 {
                    t.reward
                } else {
                    t.reward + self.config.gamma * (t1[i].min(t2[i]) - alpha * lps[i])
                }
            })
            .collect())
    }

    fn batch_tensors(&self, batch: &[&Transition]) -> Result<(Tensor, Tensor)> {
        let states = Tensor::from_rows(&batch.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>())?;
        let actions = batch
            .iter()
            .map(|t| match &t.action {
                ActionValue::Continuous(a) if a.len() == self.action_dim => Ok(a.as_slice()),
                other => Err(Error::Action(format!("sac transition with action {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((states, Tensor::from_rows(&actions)?))
    }

    /// Regresses both critics onto the soft targets; returns their losses.
    pub fn critic_update_with_noise(&mut self, batch: &[&Transition], xi: &Tensor) -> Result<(Real, Real)> {
        let y = self.critic_targets(batch, xi)?;
        let (states, actions) = self.batch_tensors(batch)?;
        let (l1, _) = self.q1.regress_pairs(&states, &actions, &y, None)?;
        adam_step(self.q1.net_mut(), &mut self.q1_opt)?;
        let (l2, _) = self.q2.regress_pairs(&states, &actions, &y, None)?;
        adam_step(self.q2.net_mut(), &mut self.q2_opt)?;
        Ok((l1, l2))
    }

    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &[&Transition], rng: &mut R) -> Result<(Real, Real)> {
        let xi = self.noise(batch.len(), rng)?;
        self.critic_update_with_noise(batch, &xi)
    }

    /// Accumulates actor gradients against the agent's own critics; see [`actor_loss_grad`].
    pub fn actor_loss_grad(&mut self, states: &Tensor, xi: &Tensor) -> Result<(Real, Vec<Real>)> {
        let alpha = self.alpha();
        actor_loss_grad(&mut self.actor, &mut self.q1, &mut self.q2, states, xi, alpha)
    }

    /// Actor step followed by a temperature step on the same samples.
    pub fn actor_update_with_noise(&mut self, states: &Tensor, xi: &Tensor) -> Result<(Real, Vec<Real>)> {
        let (loss, lps) = self.actor_loss_grad(states, xi)?;
        adam_step(self.actor.trunk_mut(), &mut self.actor_opt)?;
        Ok((loss, lps))
    }

    /// One step on `log α`; returns the new `α`.
    pub fn temperature_update(&mut self, log_probs: &[Real]) -> Result<Real> {
        self.log_alpha.grad = temperature_grad(self.alpha(), log_probs, self.target_entropy);
        adam_step(&mut self.log_alpha, &mut self.alpha_opt)?;
        Ok(self.alpha())
    }

    /// Critic, actor, temperature and target updates on one uniform minibatch.
    pub fn update<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<SacUpdate> {
        let sampled: Vec<Transition> = self
            .buffer
            .sample_uniform(self.config.batch_size, rng)?
            .into_iter()
            .map(|(_, t)| t.clone())
            .collect();
        let batch: Vec<&Transition> = sampled.iter().collect();
        let (c1, c2) = self.critic_update(&batch, rng)?;
        let states = Tensor::from_rows(&batch.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>())?;
        let xi = self.noise(batch.len(), rng)?;
        let (actor_loss, lps) = self.actor_update_with_noise(&states, &xi)?;
        let alpha = self.temperature_update(&lps)?;
        self.q1_target.update(self.q1.net())?;
        self.q2_target.update(self.q2.net())?;
        Ok(SacUpdate {
            critic1_loss: c1,
            critic2_loss: c2,
            actor_loss,
            alpha,
            entropy: -lps.iter().sum::<Real>() / lps.len() as Real,
        })
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[Real], rng: &mut R) -> Result<ActionValue> {
        Ok(self.actor.sample(state, rng)?.0)
    }

    pub fn act_greedy(&self, state: &[Real]) -> Result<ActionValue> {
        self.actor.act_greedy(state)
    }

    /// Parameters as named tensors: `actor.*`, `q1.*`, `q2.*`, `q1_target.*`, `q2_target.*`, `log_alpha`.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = self.actor.trunk().named_tensors("actor");
        out.extend(self.q1.net().named_tensors("q1"));
        out.extend(self.q2.net().named_tensors("q2"));
        out.extend(self.q1_target.net().named_tensors("q1_target"));
        out.extend(self.q2_target.net().named_tensors("q2_target"));
        out.push(("log_alpha".into(), Tensor::vector(vec![self.log_alpha.value])));
        out
    }

    /// Restores the actor only, enough for evaluation.
    pub fn load_actor(&mut self, tensors: &HashMap<String, Tensor>) -> Result<()> {
        let acts = self.actor.trunk().activations();
        let trunk = Mlp::from_named("actor", tensors, &acts)?;
        self.actor = PolicyHead::from_trunk(self.actor.kind(), trunk)?;
        Ok(())
    }
}

/// Statistics reported after every finished training episode.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SacEpisode {
    pub episode: usize,
    pub env_steps: usize,
    pub episode_return: Real,
    pub updates: usize,
    /// Means over the updates made during the episode (zero when none).
    pub last: SacUpdate,
}

/// Runs the collect/update loop for `total_steps` environment steps.
///
/// Warmup steps take uniform random actions. `on_episode` sees every
/// finished episode; `episode_seed` supplies the reset seed of episode `k`.
pub fn sac_train<E, R, F>(
    agent: &mut SacAgent,
    env: &mut E,
    total_steps: usize,
    episode_seed: impl Fn(usize) -> u64,
    rng: &mut R,
    mut on_episode: F,
) -> Result<Vec<SacEpisode>>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&SacEpisode, &SacAgent) -> Result<()>,
{
    let spec = env.spec();
    if !matches!(spec.action_kind, ActionKind::Continuous { .. }) {
        return Err(Error::Config("sac supports continuous action spaces only".into()));
    }
    let mut log = Vec::new();
    let mut steps = 0;
    let mut updates = 0;
    let mut episode = 0;
    while steps < total_steps {
        let mut s = env.reset(Some(episode_seed(episode)));
        let mut ret = 0.0;
        let mut acc = SacUpdate::default();
        let mut n_up = 0;
        loop {
            let a = if steps < agent.config.warmup_steps {
                ActionValue::Continuous((0..agent.action_dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
            } else {
                agent.act(&s, rng)?
            };
            let step = env.step(&a)?;
            ret += step.reward;
            steps += 1;
            let done = step.done;
            agent.buffer.push(Transition {
                state: std::mem::replace(&mut s, step.next_state.clone()),
                action: a,
                reward: step.reward,
                next_state: step.next_state,
                done: step.done,
                truncated: step.truncated,
            });
            if agent.config.cadence == UpdateCadence::PerStep && steps >= agent.config.warmup_steps {
                let u = agent.update(rng)?;
                accumulate(&mut acc, &u);
                n_up += 1;
            }
            if done || steps >= total_steps {
                break;
            }
        }
        if agent.config.cadence == UpdateCadence::PerEpisode && steps >= agent.config.warmup_steps {
            let u = agent.update(rng)?;
            accumulate(&mut acc, &u);
            n_up += 1;
        }
        updates += n_up;
        if n_up > 0 {
            let k = n_up as Real;
            acc.critic1_loss /= k;
            acc.critic2_loss /= k;
            acc.actor_loss /= k;
            acc.entropy /= k;
            acc.alpha = agent.alpha();
        }
        let row = SacEpisode {
            episode,
            env_steps: steps,
            episode_return: ret,
            updates,
            last: acc,
        };
        on_episode(&row, agent)?;
        log.push(row);
        episode += 1;
    }
    Ok(log)
}

fn accumulate(acc: &mut SacUpdate, u: &SacUpdate) {
    acc.critic1_loss += u.critic1_loss;
    acc.critic2_loss += u.critic2_loss;
    acc.actor_loss += u.actor_loss;
    acc.entropy += u.entropy;
    acc.alpha = u.alpha;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::PointMass;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_target_entropy_is_minus_action_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let agent = SacAgent::new(3, &ActionKind::continuous_uniform(2, -1.0, 1.0), SacConfig::default(), &mut rng).unwrap();
        assert_eq!(agent.target_entropy, -2.0);
        assert_ne!(agent.q1.net().params_flat(), agent.q2.net().params_flat());
    }

    #[test]
    fn discrete_env_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            SacAgent::new(3, &ActionKind::Discrete(2), SacConfig::default(), &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn temperature_equilibrium_and_sign() {
        assert_eq!(temperature_grad(0.7, &[1.0, 1.0], -1.0), 0.0);
        // log π above -H̄: the policy is too deterministic, gradient descent raises α
        assert!(temperature_grad(0.7, &[2.0], -1.0) < 0.0);
        assert!(temperature_grad(0.7, &[-3.0], -1.0) > 0.0);
    }

    #[test]
    fn no_updates_during_warmup() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut env = PointMass::new();
        let cfg = SacConfig {
            warmup_steps: 10_000,
            ..SacConfig::default()
        };
        let mut agent = SacAgent::new(2, &env.spec().action_kind, cfg, &mut rng).unwrap();
        let before = agent.actor.trunk().params_flat();
        let log = sac_train(&mut agent, &mut env, 300, |k| k as u64, &mut rng, |_, _| Ok(())).unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log[2].env_steps, 300);
        assert_eq!(agent.actor.trunk().params_flat(), before);
        assert_eq!(agent.buffer.len(), 300);
    }
}
