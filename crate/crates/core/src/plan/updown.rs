use rand::Rng;

use crate::env::{ActionKind, ActionValue, Environment};
use crate::error::{Error, Result};
use crate::ndmath::{adam_step, cross_entropy_loss, mse_loss, softmax, Activation};
use crate::policy::argmax;
use crate::{AdamState, Mlp, Real, Tensor};

/// Policy input `state ++ [reward command] (++ [horizon command])`.
pub fn command_input(state: &[Real], reward: Real, horizon: Option<Real>) -> Vec<Real> {
    let mut x = state.to_vec();
    x.push(reward);
    x.extend(horizon);
    x
}

/// Supervised loss for predicting the action that achieved each command.
///
/// `inputs` rows are built by [`command_input`]. Discrete actions use mean
/// cross-entropy over the logits, continuous ones mean squared error.
/// Gradients are accumulated into `net`.
pub fn upside_down_loss(net: &mut Mlp, kind: &ActionKind, inputs: &Tensor, actions: &[ActionValue]) -> Result<Real> {
    let inputs = if inputs.rank() == 1 {
        inputs.clone().reshape(vec![1, inputs.len()])?
    } else {
        inputs.clone()
    };
    if inputs.cols() != net.input_dim() {
        return Err(Error::Config(format!("upside-down input width {} does not match network input {}", inputs.cols(), net.input_dim())));
    }
    if inputs.rows() != actions.len() || actions.is_empty() {
        return Err(Error::Config(format!("{} inputs for {} actions", inputs.rows(), actions.len())));
    }
    let b = actions.len();
    match kind {
        ActionKind::Discrete(n) => {
            if net.output_dim() != *n {
                return Err(Error::Config(format!("network emits {} logits for {n} actions", net.output_dim())));
            }
            let out = net.forward_train(&inputs)?;
            let mut grad = Tensor::zeros(out.shape());
            let mut loss = 0.0;
            for (i, a) in actions.iter().enumerate() {
                let label = a.discrete().ok_or_else(|| Error::Action(format!("{a:?} for a discrete policy")))?;
                let (l, g) = cross_entropy_loss(&Tensor::vector(out.row(i).to_vec()), label)?;
                loss += l / b as Real;
                for (d, gk) in grad.row_mut(i).iter_mut().zip(g.data()) {
                    *d = gk / b as Real;
                }
            }
            net.backward(&grad)?;
            Ok(loss)
        }
        ActionKind::Continuous { dim, .. } => {
            if net.output_dim() != *dim {
                return Err(Error::Config(format!("network emits {} values for {dim}-dimensional actions", net.output_dim())));
            }
            let mut target = Vec::with_capacity(b * dim);
            for a in actions {
                match a {
                    ActionValue::Continuous(v) if v.len() == *dim => target.extend_from_slice(v),
                    other => return Err(Error::Action(format!("{other:?} for a {dim}-dimensional policy"))),
                }
            }
            let out = net.forward_train(&inputs)?;
            let (loss, g) = mse_loss(&out, &Tensor::matrix(b, *dim, target)?)?;
            net.backward(&g)?;
            Ok(loss)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpsideDownConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: Real,
    /// Append the remaining number of steps to the command.
    pub horizon_conditioning: bool,
}

impl Default for UpsideDownConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            horizon_conditioning: false,
        }
    }
}

/// One `(state, command, action)` training example.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandSample {
    pub state: Vec<Real>,
    /// Return achieved from this step on.
    pub reward: Real,
    /// Steps remaining in the episode, this one included.
    pub horizon: Real,
    pub action: ActionValue,
}

/// Turns an episode into samples commanding its return-to-go.
pub fn episode_samples(states: &[Vec<Real>], actions: &[ActionValue], rewards: &[Real]) -> Vec<CommandSample> {
    let n = rewards.len();
    let mut out = Vec::with_capacity(n);
    let mut g = 0.0;
    for t in (0..n).rev() {
        g += rewards[t];
        out.push(CommandSample {
            state: states[t].clone(),
            reward: g,
            horizon: (n - t) as Real,
            action: actions[t].clone(),
        });
    }
    out.reverse();
    out
}

/// Reward-conditioned policy trained by supervised learning.
#[derive(Debug, Clone)]
pub struct UpsideDownLearner {
    pub net: Mlp,
    pub action_kind: ActionKind,
    pub config: UpsideDownConfig,
    /// Largest reward command seen in training; used at inference.
    pub max_reward: Real,
    pub max_horizon: Real,
    opt: AdamState,
}

impl UpsideDownLearner {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_kind: ActionKind, config: UpsideDownConfig, rng: &mut R) -> Result<Self> {
        let input = state_dim + 1 + usize::from(config.horizon_conditioning);
        let out = match &action_kind {
            ActionKind::Discrete(n) => *n,
            ActionKind::Continuous { dim, .. } => *dim,
        };
        let net = Mlp::with_hidden(input, &config.hidden, out, Activation::Relu, rng)?;
        Ok(Self {
            net,
            opt: AdamState::new(config.learning_rate),
            action_kind,
            config,
            max_reward: Real::NEG_INFINITY,
            max_horizon: 0.0,
        })
    }

    fn horizon(&self, h: Real) -> Option<Real> {
        self.config.horizon_conditioning.then_some(h)
    }

    /// One Adam step on a minibatch; returns the loss.
    pub fn train_step(&mut self, batch: &[CommandSample]) -> Result<Real> {
        let rows: Vec<Vec<Real>> = batch.iter().map(|s| command_input(&s.state, s.reward, self.horizon(s.horizon))).collect();
        let inputs = Tensor::from_rows(&rows.iter().map(Vec::as_slice).collect::<Vec<_>>())?;
        let actions: Vec<ActionValue> = batch.iter().map(|s| s.action.clone()).collect();
        self.net.zero_grad();
        let loss = upside_down_loss(&mut self.net, &self.action_kind, &inputs, &actions)?;
        adam_step(&mut self.net, &mut self.opt)?;
        for s in batch {
            self.max_reward = self.max_reward.max(s.reward);
            self.max_horizon = self.max_horizon.max(s.horizon);
        }
        Ok(loss)
    }

    /// Action for an explicit command: argmax logits or the clamped regression output.
    pub fn act(&self, state: &[Real], reward: Real, horizon: Real) -> Result<ActionValue> {
        let out = self.net.forward(&Tensor::vector(command_input(state, reward, self.horizon(horizon))))?;
        Ok(match &self.action_kind {
            ActionKind::Discrete(_) => ActionValue::Discrete(argmax(out.data())),
            ActionKind::Continuous { low, high, .. } => {
                ActionValue::Continuous(out.data().iter().enumerate().map(|(k, x)| x.clamp(low[k], high[k])).collect())
            }
        })
    }

    /// Action probabilities under a command (discrete only).
    pub fn probabilities(&self, state: &[Real], reward: Real, horizon: Real) -> Result<Vec<Real>> {
        if !self.action_kind.is_discrete() {
            return Err(Error::Unsupported("probabilities of a continuous upside-down policy".into()));
        }
        Ok(softmax(self.net.forward(&Tensor::vector(command_input(state, reward, self.horizon(horizon))))?.data()))
    }

    /// Commands the largest reward seen in training.
    pub fn act_max(&self, state: &[Real]) -> Result<ActionValue> {
        if !self.max_reward.is_finite() {
            return Err(Error::State("upside-down policy has not been trained".into()));
        }
        self.act(state, self.max_reward, self.max_horizon)
    }
}

/// Collects `episodes` episodes with uniformly random actions and returns
/// their command samples.
pub fn random_command_samples<E: Environment + ?Sized, R: Rng + ?Sized>(env: &mut E, episodes: usize, max_steps: usize, seed: u64, rng: &mut R) -> Result<Vec<CommandSample>> {
    let kind = env.spec().action_kind;
    let mut out = Vec::new();
    for k in 0..episodes {
        let mut s = env.reset(Some(seed.wrapping_add(k as u64)));
        let (mut states, mut actions, mut rewards) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..max_steps {
            let a = match &kind {
                ActionKind::Discrete(n) => ActionValue::Discrete(rng.random_range(0..*n)),
                ActionKind::Continuous { low, high, .. } => ActionValue::Continuous(low.iter().zip(high).map(|(l, h)| rng.random_range(*l..=*h)).collect()),
            };
            let step = env.step(&a)?;
            states.push(std::mem::replace(&mut s, step.next_state));
            actions.push(a);
            rewards.push(step.reward);
            if step.done {
                break;
            }
        }
        out.extend(episode_samples(&states, &actions, &rewards));
    }
    Ok(out)
}
