//! Proximal Policy Optimization with the clipped surrogate objective.
//!
//! `M` workers each own an environment and step it for `T` steps per
//! iteration with a read-only snapshot of the network. The `M * T` rows get
//! GAE targets once, then `K` epochs of shuffled minibatch updates minimise
//! `L_π + c1 L_V + c2 L_H`, after which the batch is discarded.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{ActionKind, ActionValue, Environment};
use crate::error::{Error, Result};
use crate::ndmath::{adam_step, Activation, ParamSet};
use crate::onpolicy::{gae, importance_weight, normalize};
use crate::policy::HeadKind;
use crate::seeding::derive_indexed;
use crate::{AdamState, Mlp, Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    /// Clip threshold ψ.
    pub clip: Real,
    /// Value loss coefficient.
    pub c1: Real,
    /// Entropy loss coefficient.
    pub c2: Real,
    pub actors: usize,
    pub steps_per_actor: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub gamma: Real,
    pub lambda: Real,
    pub learning_rate: Real,
    /// Linear decay of the learning rate to zero over the run.
    pub lr_decay: bool,
    pub normalize_advantages: bool,
    pub max_grad_norm: Option<Real>,
    pub hidden: Vec<usize>,
    pub bootstrap_on_truncation: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            c1: 0.5,
            c2: 0.01,
            actors: 8,
            steps_per_actor: 128,
            epochs: 4,
            minibatch: 256,
            gamma: 0.99,
            lambda: 0.95,
            learning_rate: 3e-4,
            lr_decay: true,
            normalize_advantages: true,
            max_grad_norm: Some(0.5),
            hidden: vec![64, 64],
            bootstrap_on_truncation: true,
        }
    }
}

impl PpoConfig {
    pub fn batch_rows(&self) -> usize {
        self.actors * self.steps_per_actor
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("ppo: {m}")));
        if !(self.clip > 0.0) {
            return bad("clip must be > 0");
        }
        if self.actors == 0 || self.steps_per_actor == 0 || self.epochs == 0 {
            return bad("actors, steps_per_actor and epochs must be >= 1");
        }
        if self.minibatch == 0 || !self.batch_rows().is_multiple_of(self.minibatch) {
            return bad(&format!("minibatch {} must divide actors * steps_per_actor = {}", self.minibatch, self.batch_rows()));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return bad("gamma and lambda must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0) || self.c1 < 0.0 || self.c2 < 0.0 {
            return bad("learning rate must be > 0 and loss coefficients >= 0");
        }
        Ok(())
    }
}

/// Shared trunk with a policy head and a scalar value head.
#[derive(Debug, Clone)]
pub struct ActorCriticNet {
    kind: HeadKind,
    pub trunk: Mlp,
    pub policy: Mlp,
    pub value: Mlp,
}

impl ActorCriticNet {
    /// Tanh trunk; the policy head starts with weights scaled by 0.01 so the
    /// initial policy is close to uniform.
    pub fn new<R: Rng + ?Sized>(state_dim: usize, kind: HeadKind, hidden: &[usize], rng: &mut R) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Config("actor-critic trunk needs at least one hidden layer".into()));
        }
        if !kind.is_stochastic() {
            return Err(Error::Config("ppo needs a stochastic policy head".into()));
        }
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        let trunk = Mlp::new(&sizes, &vec![Activation::Tanh; hidden.len()], rng)?;
        let feat = *hidden.last().expect("nonempty");
        let mut policy = Mlp::new(&[feat, kind.output_width()], &[Activation::Identity], rng)?;
        for w in policy.layers_mut()[0].weight_mut().data_mut() {
            *w *= 0.01;
        }
        let value = Mlp::new(&[feat, 1], &[Activation::Identity], rng)?;
        Ok(Self { kind, trunk, policy, value })
    }

    pub fn from_parts(kind: HeadKind, trunk: Mlp, policy: Mlp, value: Mlp) -> Result<Self> {
        if policy.input_dim() != trunk.output_dim() || value.input_dim() != trunk.output_dim() {
            return Err(Error::dim("actor-critic heads", trunk.output_dim(), format!("{} and {}", policy.input_dim(), value.input_dim())));
        }
        if policy.output_dim() != kind.output_width() || value.output_dim() != 1 {
            return Err(Error::dim("actor-critic outputs", format!("{} and 1", kind.output_width()), format!("{} and {}", policy.output_dim(), value.output_dim())));
        }
        Ok(Self { kind, trunk, policy, value })
    }

    pub fn kind(&self) -> HeadKind {
        self.kind
    }

    pub fn state_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    /// Raw policy outputs `[B, width]` and values.
    pub fn forward(&self, states: &Tensor) -> Result<(Tensor, Vec<Real>)> {
        let h = self.trunk.forward(states)?;
        Ok((self.policy.forward(&h)?, self.value.forward(&h)?.into_data()))
    }

    pub fn forward_one(&self, state: &[Real]) -> Result<(Vec<Real>, Real)> {
        let (out, v) = self.forward(&Tensor::vector(state.to_vec()))?;
        Ok((out.into_data(), v[0]))
    }

    pub fn predict_value(&self, state: &[Real]) -> Result<Real> {
        Ok(self.forward_one(state)?.1)
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[Real], rng: &mut R) -> Result<(ActionValue, Real, Real)> {
        let (out, v) = self.forward_one(state)?;
        let (a, lp) = self.kind.sample(&out, rng)?;
        Ok((a, lp, v))
    }

    pub fn act_greedy(&self, state: &[Real]) -> Result<ActionValue> {
        self.kind.greedy(&self.forward_one(state)?.0)
    }

    pub fn zero_grad(&mut self) {
        self.trunk.zero_grad();
        self.policy.zero_grad();
        self.value.zero_grad();
    }

    pub fn params_flat(&self) -> Vec<Real> {
        let mut p = self.trunk.params_flat();
        p.extend(self.policy.params_flat());
        p.extend(self.value.params_flat());
        p
    }

    pub fn grads_flat(&self) -> Vec<Real> {
        let mut g = self.trunk.grads_flat();
        g.extend(self.policy.grads_flat());
        g.extend(self.value.grads_flat());
        g
    }

    pub fn set_params_flat(&mut self, flat: &[Real]) -> Result<()> {
        let (a, b) = (self.trunk.num_params(), self.policy.num_params());
        if flat.len() != a + b + self.value.num_params() {
            return Err(Error::dim("actor-critic params", a + b + self.value.num_params(), flat.len()));
        }
        self.trunk.set_params_flat(&flat[..a])?;
        self.policy.set_params_flat(&flat[a..a + b])?;
        self.value.set_params_flat(&flat[a + b..])
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = self.trunk.named_tensors("trunk");
        out.extend(self.policy.named_tensors("policy"));
        out.extend(self.value.named_tensors("value"));
        out
    }

    pub fn from_named(kind: HeadKind, hidden_layers: usize, tensors: &HashMap<String, Tensor>) -> Result<Self> {
        let trunk = Mlp::from_named("trunk", tensors, &vec![Activation::Tanh; hidden_layers])?;
        let policy = Mlp::from_named("policy", tensors, &[Activation::Identity])?;
        let value = Mlp::from_named("value", tensors, &[Activation::Identity])?;
        Self::from_parts(kind, trunk, policy, value)
    }
}

impl ParamSet<Real> for ActorCriticNet {
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut [Real], &mut [Real])) {
        for (prefix, net) in [("trunk", &mut self.trunk), ("policy", &mut self.policy), ("value", &mut self.value)] {
            net.visit_params(&mut |name, p, g| f(&format!("{prefix}.{name}"), p, g));
        }
    }
}

/// `-min(r A, clip(r, 1 - ψ, 1 + ψ) A)` and its derivative in `r`.
///
/// Ties go to the unclipped branch, so the gradient is `-A` inside the band.
pub fn ppo_clip_loss(ratio: Real, advantage: Real, clip: Real) -> (Real, Real) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (-unclipped, -advantage)
    } else {
        (-clipped, 0.0)
    }
}

/// `M * T` rows stored actor-major: row `m * T + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub actors: usize,
    pub steps: usize,
    pub states: Tensor,
    pub actions: Vec<ActionValue>,
    pub rewards: Vec<Real>,
    pub dones: Vec<bool>,
    pub truncated: Vec<bool>,
    /// Log-probabilities under the collection-time snapshot.
    pub log_probs: Vec<Real>,
    pub values: Vec<Real>,
    /// `V(s')` of the final observation on truncated rows, zero elsewhere.
    pub truncation_values: Vec<Real>,
    /// `V(s_T)` per actor, for the segment still running at the window end.
    pub bootstrap_values: Vec<Real>,
    pub advantages: Vec<Real>,
    pub returns: Vec<Real>,
    /// `(actor, return, length)` of every episode finished in this window.
    pub finished: Vec<(usize, Real, usize)>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// One actor: an environment that persists across iterations plus its own RNG.
#[derive(Debug)]
pub struct RolloutWorker<E> {
    pub index: usize,
    pub env: E,
    rng: ChaCha8Rng,
    state: Vec<Real>,
    episode_return: Real,
    episode_len: usize,
}

struct Segment {
    states: Vec<Real>,
    actions: Vec<ActionValue>,
    rewards: Vec<Real>,
    dones: Vec<bool>,
    truncated: Vec<bool>,
    log_probs: Vec<Real>,
    values: Vec<Real>,
    truncation_values: Vec<Real>,
    bootstrap: Real,
    finished: Vec<(Real, usize)>,
}

impl<E: Environment> RolloutWorker<E> {
    pub fn new(index: usize, mut env: E, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = env.reset(Some(rng.random()));
        Self {
            index,
            env,
            rng,
            state,
            episode_return: 0.0,
            episode_len: 0,
        }
    }

    pub fn state(&self) -> &[Real] {
        &self.state
    }

    fn collect(&mut self, net: &ActorCriticNet, steps: usize) -> Result<Segment> {
        let sd = self.state.len();
        let mut seg = Segment {
            states: Vec::with_capacity(steps * sd),
            actions: Vec::with_capacity(steps),
            rewards: Vec::with_capacity(steps),
            dones: Vec::with_capacity(steps),
            truncated: Vec::with_capacity(steps),
            log_probs: Vec::with_capacity(steps),
            values: Vec::with_capacity(steps),
            truncation_values: Vec::with_capacity(steps),
            bootstrap: 0.0,
            finished: Vec::new(),
        };
        for _ in 0..steps {
            let (a, lp, v) = net.act(&self.state, &mut self.rng)?;
            let step = self.env.step(&a)?;
            seg.states.extend_from_slice(&self.state);
            seg.actions.push(a);
            seg.rewards.push(step.reward);
            seg.dones.push(step.done);
            seg.truncated.push(step.truncated);
            seg.log_probs.push(lp);
            seg.values.push(v);
            seg.truncation_values.push(if step.truncated { net.predict_value(&step.next_state)? } else { 0.0 });
            self.episode_return += step.reward;
            self.episode_len += 1;
            if step.done {
                seg.finished.push((self.episode_return, self.episode_len));
                self.episode_return = 0.0;
                self.episode_len = 0;
                self.state = self.env.reset(Some(self.rng.random()));
            } else {
                self.state = step.next_state;
            }
        }
        seg.bootstrap = net.predict_value(&self.state)?;
        Ok(seg)
    }
}

/// Steps every worker `steps` times with the snapshot `net`.
///
/// Workers are split into `threads` contiguous groups; results are merged by
/// actor index, so the batch does not depend on `threads`.
pub fn rollout<E: Environment>(net: &ActorCriticNet, workers: &mut [RolloutWorker<E>], steps: usize, threads: usize) -> Result<RolloutBatch> {
    if workers.is_empty() || steps == 0 {
        return Err(Error::Config("rollout needs at least one worker and one step".into()));
    }
    let run = |w: &mut RolloutWorker<E>| {
        w.collect(net, steps).map_err(|e| Error::Actor {
            index: w.index,
            source: Box::new(e),
        })
    };
    let threads = threads.clamp(1, workers.len());
    let segments: Vec<Result<Segment>> = if threads == 1 {
        workers.iter_mut().map(run).collect()
    } else {
        let chunk = workers.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = workers
                .chunks_mut(chunk)
                .map(|group| s.spawn(move || group.iter_mut().map(run).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("rollout worker panicked"))
                .collect()
        })
    };
    let m = workers.len();
    let rows = m * steps;
    let sd = net.state_dim();
    let mut batch = RolloutBatch {
        actors: m,
        steps,
        states: Tensor::zeros(&[0]),
        actions: Vec::with_capacity(rows),
        rewards: Vec::with_capacity(rows),
        dones: Vec::with_capacity(rows),
        truncated: Vec::with_capacity(rows),
        log_probs: Vec::with_capacity(rows),
        values: Vec::with_capacity(rows),
        truncation_values: Vec::with_capacity(rows),
        bootstrap_values: Vec::with_capacity(m),
        advantages: Vec::new(),
        returns: Vec::new(),
        finished: Vec::new(),
    };
    let mut states = Vec::with_capacity(rows * sd);
    for (actor, seg) in segments.into_iter().enumerate() {
        let seg = seg?;
        states.extend(seg.states);
        batch.actions.extend(seg.actions);
        batch.rewards.extend(seg.rewards);
        batch.dones.extend(seg.dones);
        batch.truncated.extend(seg.truncated);
        batch.log_probs.extend(seg.log_probs);
        batch.values.extend(seg.values);
        batch.truncation_values.extend(seg.truncation_values);
        batch.bootstrap_values.push(seg.bootstrap);
        batch.finished.extend(seg.finished.into_iter().map(|(r, l)| (actor, r, l)));
    }
    batch.states = Tensor::matrix(rows, sd, states)?;
    Ok(batch)
}

/// Fills the advantage and return columns with per-segment GAE.
///
/// Segments end at `done` rows or at the window end; a true terminal drops
/// the bootstrap, a truncation bootstraps with `V(s')` when
/// `bootstrap_on_truncation`, and an unfinished segment uses `V(s_T)`.
/// Returns are `A + V`; normalisation only touches the advantages.
pub fn compute_targets(batch: &mut RolloutBatch, gamma: Real, lambda: Real, normalize_advantages: bool, bootstrap_on_truncation: bool) -> Result<()> {
    let n = batch.len();
    let mut adv = vec![0.0; n];
    for actor in 0..batch.actors {
        let base = actor * batch.steps;
        let mut start = 0;
        while start < batch.steps {
            let mut end = start;
            while end < batch.steps - 1 && !batch.dones[base + end] {
                end += 1;
            }
            let last = base + end;
            let (tail, terminal) = if batch.dones[last] {
                if batch.truncated[last] && bootstrap_on_truncation {
                    (batch.truncation_values[last], false)
                } else {
                    (0.0, true)
                }
            } else {
                (batch.bootstrap_values[actor], false)
            };
            let rewards = &batch.rewards[base + start..=last];
            let mut values = batch.values[base + start..=last].to_vec();
            values.push(tail);
            let a = gae(rewards, &values, terminal, lambda, gamma)?;
            adv[base + start..=last].copy_from_slice(&a);
            start = end + 1;
        }
    }
    batch.returns = adv.iter().zip(&batch.values).map(|(a, v)| a + v).collect();
    if normalize_advantages {
        normalize(&mut adv);
    }
    batch.advantages = adv;
    Ok(())
}

/// `mean Σ_a π log π` over `states`; tanh-Gaussian heads use a one-sample
/// estimate of `-H`.
pub fn entropy_bonus<R: Rng + ?Sized>(net: &ActorCriticNet, states: &Tensor, rng: &mut R) -> Result<Real> {
    let (out, _) = net.forward(states)?;
    let b = out.rows();
    let mut total = 0.0;
    for i in 0..b {
        total -= net.kind.entropy(out.row(i), rng)?.value;
    }
    Ok(total / b as Real)
}

/// Minibatch losses with ratio statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoLoss {
    pub policy: Real,
    pub value: Real,
    pub entropy: Real,
    pub total: Real,
    pub ratio_mean: Real,
    pub ratio_max: Real,
    pub clip_fraction: Real,
    pub exploded: usize,
}

/// Joint loss `L_π + c1 L_V + c2 L_H` on the rows `idx`; gradients are
/// accumulated into `net` without stepping.
///
/// `L_V = mean (V(s) - G)^2`. `L_H = mean Σ π log π` for categorical and
/// diagonal Gaussian heads; tanh-Gaussian heads use `mean log π(a|s)` of the
/// stored actions.
pub fn ppo_loss(net: &mut ActorCriticNet, batch: &RolloutBatch, idx: &[usize], cfg: &PpoConfig) -> Result<PpoLoss> {
    if batch.advantages.len() != batch.len() || batch.returns.len() != batch.len() {
        return Err(Error::State("ppo loss before compute_targets".into()));
    }
    if idx.is_empty() {
        return Err(Error::Config("empty ppo minibatch".into()));
    }
    let sd = batch.states.cols();
    let mut rows = Vec::with_capacity(idx.len() * sd);
    for &i in idx {
        rows.extend_from_slice(batch.states.row(i));
    }
    let states = Tensor::matrix(idx.len(), sd, rows)?;
    let h = net.trunk.forward_train(&states)?;
    let out = net.policy.forward_train(&h)?;
    let v = net.value.forward_train(&h)?;
    let b = idx.len() as Real;
    let width = net.kind.output_width();
    let mut g_out = Tensor::zeros(&[idx.len(), width]);
    let mut g_v = Tensor::zeros(&[idx.len(), 1]);
    let mut loss = PpoLoss {
        ratio_max: Real::NEG_INFINITY,
        ..PpoLoss::default()
    };
    let mut clipped = 0usize;
    for (r, &i) in idx.iter().enumerate() {
        let row = out.row(r);
        let (lp, dlp) = net.kind.log_prob_grad(row, &batch.actions[i])?;
        let w = importance_weight(lp, batch.log_probs[i])?;
        let ratio = w.ratio;
        if w.exploded {
            loss.exploded += 1;
        }
        if (ratio - 1.0).abs() > cfg.clip {
            clipped += 1;
        }
        loss.ratio_mean += ratio / b;
        loss.ratio_max = loss.ratio_max.max(ratio);
        let (lpi, dr) = ppo_clip_loss(ratio, batch.advantages[i], cfg.clip);
        loss.policy += lpi / b;
        let g = g_out.row_mut(r);
        for k in 0..width {
            g[k] += dr * ratio * dlp[k] / b;
        }
        let (ent_term, dent) = match net.kind {
            HeadKind::TanhGaussian(_) => (lp, dlp.clone()),
            _ => {
                let (hh, gh) = net.kind.entropy_grad(row)?;
                (-hh, gh.into_iter().map(|x| -x).collect())
            }
        };
        loss.entropy += ent_term / b;
        for k in 0..width {
            g[k] += cfg.c2 * dent[k] / b;
        }
        let err = v.data()[r] - batch.returns[i];
        loss.value += err * err / b;
        g_v.data_mut()[r] = 2.0 * cfg.c1 * err / b;
    }
    loss.clip_fraction = clipped as Real / b;
    loss.total = loss.policy + cfg.c1 * loss.value + cfg.c2 * loss.entropy;
    if !loss.total.is_finite() {
        net.trunk.clear_cache();
        net.policy.clear_cache();
        net.value.clear_cache();
        return Err(Error::TrainingDivergence { param: "ppo loss".into() });
    }
    let mut g_h = net.policy.backward(&g_out)?;
    let g_hv = net.value.backward(&g_v)?;
    for (a, b) in g_h.data_mut().iter_mut().zip(g_hv.data()) {
        *a += b;
    }
    net.trunk.backward(&g_h)?;
    Ok(loss)
}

/// Means over one epoch's minibatches.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoEpochStats {
    pub loss: PpoLoss,
    pub grad_norm: Real,
}

/// `K` epochs of shuffled minibatch Adam steps. Epoch `k` shuffles with
/// `derive_indexed(shuffle_seed, "epoch", k)`.
pub fn ppo_update(net: &mut ActorCriticNet, opt: &mut AdamState, batch: &RolloutBatch, cfg: &PpoConfig, shuffle_seed: u64) -> Result<Vec<PpoEpochStats>> {
    cfg.validate()?;
    if !batch.len().is_multiple_of(cfg.minibatch) {
        return Err(Error::Config(format!("minibatch {} does not divide batch of {}", cfg.minibatch, batch.len())));
    }
    opt.max_grad_norm = cfg.max_grad_norm;
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for k in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_indexed(shuffle_seed, "epoch", k as u64));
        order.shuffle(&mut rng);
        let mut acc = PpoEpochStats::default();
        acc.loss.ratio_max = Real::NEG_INFINITY;
        let chunks = batch.len() / cfg.minibatch;
        for idx in order.chunks(cfg.minibatch) {
            net.zero_grad();
            let l = ppo_loss(net, batch, idx, cfg)?;
            let norm = adam_step(net, opt)?;
            let c = chunks as Real;
            acc.loss.policy += l.policy / c;
            acc.loss.value += l.value / c;
            acc.loss.entropy += l.entropy / c;
            acc.loss.total += l.total / c;
            acc.loss.ratio_mean += l.ratio_mean / c;
            acc.loss.clip_fraction += l.clip_fraction / c;
            acc.loss.ratio_max = acc.loss.ratio_max.max(l.ratio_max);
            acc.loss.exploded += l.exploded;
            acc.grad_norm += norm / c;
        }
        epochs.push(acc);
    }
    Ok(epochs)
}

/// Per-iteration report.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoIteration {
    pub iteration: usize,
    pub env_steps: usize,
    pub learning_rate: Real,
    /// Returns of the episodes finished during this iteration's rollout.
    pub episode_returns: Vec<Real>,
    /// Statistics of the last epoch.
    pub last_epoch: PpoEpochStats,
    /// Ratio statistics at the start of the first epoch.
    pub first_epoch: PpoEpochStats,
}

/// Trains for `total_steps` env steps (rounded up to whole iterations).
///
/// `make_env(m)` builds actor `m`'s environment; actor RNGs are seeded with
/// `derive_indexed(seed, "actor", m)`. `on_iter` may return `false` to stop.
pub fn ppo_train<E, F, C>(net: &mut ActorCriticNet, cfg: &PpoConfig, mut make_env: F, total_steps: usize, seed: u64, threads: usize, mut on_iter: C) -> Result<Vec<PpoIteration>>
where
    E: Environment,
    F: FnMut(usize) -> E,
    C: FnMut(&PpoIteration, &ActorCriticNet) -> Result<bool>,
{
    cfg.validate()?;
    let mut workers: Vec<RolloutWorker<E>> = (0..cfg.actors)
        .map(|m| RolloutWorker::new(m, make_env(m), derive_indexed(seed, "actor", m as u64)))
        .collect();
    check_env(net, &workers[0].env)?;
    let per_iter = cfg.batch_rows();
    let iterations = total_steps.div_ceil(per_iter).max(1);
    let mut opt = AdamState::new(cfg.learning_rate);
    let mut log = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let lr = if cfg.lr_decay {
            cfg.learning_rate * (1.0 - it as Real / iterations as Real)
        } else {
            cfg.learning_rate
        };
        opt.learning_rate = lr;
        let mut batch = rollout(net, &mut workers, cfg.steps_per_actor, threads)?;
        compute_targets(&mut batch, cfg.gamma, cfg.lambda, cfg.normalize_advantages, cfg.bootstrap_on_truncation)?;
        let epochs = ppo_update(net, &mut opt, &batch, cfg, derive_indexed(seed, "shuffle", it as u64))?;
        let row = PpoIteration {
            iteration: it,
            env_steps: (it + 1) * per_iter,
            learning_rate: lr,
            episode_returns: batch.finished.iter().map(|f| f.1).collect(),
            first_epoch: epochs[0],
            last_epoch: *epochs.last().expect("epochs >= 1"),
        };
        let go_on = on_iter(&row, net)?;
        log.push(row);
        if !go_on {
            break;
        }
    }
    Ok(log)
}

fn check_env<E: Environment>(net: &ActorCriticNet, env: &E) -> Result<()> {
    let spec = env.spec();
    if spec.state_dim != net.state_dim() {
        return Err(Error::dim("ppo state", net.state_dim(), spec.state_dim));
    }
    let fits = match (&spec.action_kind, net.kind) {
        (ActionKind::Discrete(n), HeadKind::Categorical(k)) => *n == k,
        (ActionKind::Continuous { dim, .. }, HeadKind::TanhGaussian(d) | HeadKind::DiagonalGaussian(d)) => *dim == d,
        _ => false,
    };
    if !fits {
        return Err(Error::Config(format!("policy head {:?} does not fit {:?}", net.kind, spec.action_kind)));
    }
    Ok(())
}
