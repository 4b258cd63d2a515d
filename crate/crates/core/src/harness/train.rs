use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Algorithm, RunConfig};
use super::metrics::{MetricsLog, MetricsRow};
use super::{build_env, episode_cap, evaluate, mcts_config, mean_std, worker_threads, Split};
use crate::buffer::{importance_weights, PriorityConfig, ReplayBuffer};
use crate::env::{ActionKind, ActionValue, Environment, Step, Transition};
use crate::error::{Error, Result};
use crate::ndmath::{adam_step, checkpoint, Activation};
use crate::onpolicy::{Reinforce, ReinforceConfig, ValueFunction};
use crate::plan::{Mcts, UpsideDownConfig, UpsideDownLearner};
use crate::policy::{Decay, ExplorationKind, ExplorationSchedule, HeadKind, PolicyHead};
use crate::ppo::{ppo_train, ActorCriticNet, PpoConfig};
use crate::sac::{sac_train, SacAgent, SacConfig, UpdateCadence};
use crate::seeding::{derive_indexed, derive_seed, stream_rng};
use crate::value::{double_q_target, td0_target, QFunction, QMode, TabularQ, TargetNetwork, TargetUpdate};
use crate::{AdamState, Mlp, Real, Tensor};

type Named = Vec<(String, Tensor)>;

/// Outcome of a finished training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub env_steps: u64,
    pub updates: u64,
    pub episodes: u64,
    pub eval: EvalReport,
    pub metrics_path: PathBuf,
    /// `None` for planning runs, which have no parameters.
    pub checkpoint_path: Option<PathBuf>,
}

/// Greedy evaluation returns.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub returns: Vec<Real>,
    pub mean: Real,
    pub std: Real,
}

impl EvalReport {
    fn new(returns: Vec<Real>) -> Self {
        let (mean, std) = mean_std(&returns);
        Self { returns, mean, std }
    }
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CONFIG_FILE: &str = "config.txt";
pub const FINAL_CHECKPOINT: &str = "final.ndrl";
pub const DIVERGED_CHECKPOINT: &str = "diverged.ndrl";

/// Per-interval accumulator; every update lands in exactly one row.
#[derive(Default)]
struct Interval {
    items: usize,
    returns: Vec<Real>,
    sums: BTreeMap<String, (Real, Real)>,
}

impl Interval {
    fn loss(&mut self, name: &str, v: Real, weight: Real) {
        let e = self.sums.entry(name.to_string()).or_default();
        e.0 += v * weight;
        e.1 += weight;
    }

    fn take(&mut self) -> (Option<Real>, BTreeMap<String, Real>) {
        let ret = (!self.returns.is_empty()).then(|| mean_std(&self.returns).0);
        let losses = self
            .sums
            .iter()
            .filter(|(_, (_, w))| *w > 0.0)
            .map(|(k, (s, w))| (k.clone(), s / w))
            .collect();
        *self = Interval::default();
        (ret, losses)
    }
}

/// State shared by every algorithm driver.
struct Run<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    log: MetricsLog<BufWriter<File>>,
    eval_env: Box<dyn Environment>,
    interval: Interval,
    next_eval: usize,
    next_ckpt: usize,
    episodes: u64,
    updates: u64,
    env_steps: u64,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a RunConfig, out: &'a Path) -> Result<Self> {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join(CONFIG_FILE), cfg.serialize())?;
        let file = File::create(out.join(METRICS_FILE))?;
        Ok(Self {
            cfg,
            out,
            log: MetricsLog::new(BufWriter::new(file)),
            eval_env: build_env(cfg, Split::Validation)?,
            interval: Interval::default(),
            next_eval: if cfg.eval_every == 0 { usize::MAX } else { cfg.eval_every },
            next_ckpt: if cfg.checkpoint_every == 0 { usize::MAX } else { cfg.checkpoint_every },
            episodes: 0,
            updates: 0,
            env_steps: 0,
        })
    }

    fn eval_due(&mut self) -> bool {
        if self.env_steps as usize >= self.next_eval {
            while self.next_eval <= self.env_steps as usize {
                self.next_eval += self.cfg.eval_every;
            }
            return true;
        }
        false
    }

    fn evaluate(&mut self, policy: impl FnMut(&[Real]) -> Result<ActionValue>) -> Result<EvalReport> {
        Ok(EvalReport::new(evaluate(self.eval_env.as_mut(), self.cfg.eval_episodes, self.cfg.seed, policy)?))
    }

    /// Closes the interval once it holds `log_every` items or when forced.
    fn maybe_log(&mut self, force: bool, exploration: &[(&str, Real)], eval: Option<&EvalReport>) -> Result<()> {
        if self.interval.items == 0 && !force {
            return Ok(());
        }
        if self.interval.items < self.cfg.log_every && !force && eval.is_none() {
            return Ok(());
        }
        let (train_return, losses) = self.interval.take();
        let mut row = MetricsRow {
            env_steps: self.env_steps,
            updates: self.updates,
            episode: (self.episodes > 0).then_some(self.episodes),
            train_return,
            eval_return_mean: eval.map(|e| e.mean),
            eval_return_std: eval.map(|e| e.std),
            losses,
            ..Default::default()
        };
        for &(k, v) in exploration {
            row = row.explore(k, v);
        }
        self.log.write(row)
    }

    fn checkpoint_due(&mut self) -> bool {
        if self.env_steps as usize >= self.next_ckpt {
            while self.next_ckpt <= self.env_steps as usize {
                self.next_ckpt += self.cfg.checkpoint_every;
            }
            return true;
        }
        false
    }

    fn save(&self, name: &str, tensors: &Named) -> Result<PathBuf> {
        let p = self.out.join(name);
        checkpoint::save(&p, tensors)?;
        Ok(p)
    }

    fn periodic(&mut self, tensors: impl FnOnce() -> Named) -> Result<()> {
        if self.checkpoint_due() {
            self.save(&format!("checkpoint_{}.ndrl", self.env_steps), &tensors())?;
        }
        Ok(())
    }

    /// Writes the diagnostic checkpoint when `r` is a divergence.
    fn guard<T>(&self, r: Result<T>, tensors: impl FnOnce() -> Named) -> Result<T> {
        if let Err(Error::TrainingDivergence { .. }) = &r {
            self.save(DIVERGED_CHECKPOINT, &tensors())?;
        }
        r
    }

    fn finish(mut self, tensors: Option<Named>, eval: EvalReport) -> Result<RunSummary> {
        self.maybe_log(true, &[], Some(&eval))?;
        self.log.flush()?;
        let checkpoint_path = match tensors {
            Some(t) => Some(self.save(FINAL_CHECKPOINT, &t)?),
            None => None,
        };
        Ok(RunSummary {
            algorithm: self.cfg.algorithm,
            env_steps: self.env_steps,
            updates: self.updates,
            episodes: self.episodes,
            eval,
            metrics_path: self.out.join(METRICS_FILE),
            checkpoint_path,
        })
    }
}

/// Trains the configured algorithm and writes `config.txt`,
/// `metrics.jsonl`, periodic `checkpoint_<steps>.ndrl` files and
/// `final.ndrl` into `out`. A non-finite loss aborts the run after writing
/// `diverged.ndrl`.
pub fn run_train(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let run = Run::new(cfg, out)?;
    match cfg.algorithm {
        Algorithm::Qlearn if cfg.qlearn.tabular => train_tabular(run),
        Algorithm::Qlearn => train_dqn(run),
        Algorithm::Reinforce => train_reinforce(run),
        Algorithm::Sac => train_sac(run),
        Algorithm::Ppo => train_ppo(run),
        Algorithm::Updown => train_updown(run),
        Algorithm::Plan => train_plan(run),
    }
}

fn discrete_actions(env: &dyn Environment, algo: &str) -> Result<usize> {
    match env.spec().action_kind {
        ActionKind::Discrete(n) => Ok(n),
        k => Err(Error::Config(format!("{algo} needs a discrete action space, `{}` has {k:?}", env.name()))),
    }
}

fn episode_seed(cfg: &RunConfig, k: u64) -> u64 {
    derive_indexed(cfg.seed, "episode", k)
}

fn greedy_q(q: &QFunction, s: &[Real]) -> Result<ActionValue> {
    Ok(ActionValue::Discrete(crate::policy::argmax(&q.values(s)?)))
}

fn epsilon_schedule(cfg: &RunConfig) -> Result<ExplorationSchedule> {
    let q = &cfg.qlearn;
    ExplorationSchedule::new(ExplorationKind::EpsilonGreedy {
        start: q.epsilon_start,
        end: q.epsilon_end,
        decay_steps: q.epsilon_decay_steps as u64,
        decay: if q.epsilon_decay == "exponential" { Decay::Exponential } else { Decay::Linear },
    })
}

fn new_q(cfg: &RunConfig, state_dim: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<QFunction> {
    QFunction::new(QMode::StateToAllActions(n), state_dim, &cfg.qlearn.hidden, Activation::Relu, rng)
}

fn q_tensors(q: &QFunction, target: &TargetNetwork) -> Named {
    let mut t = q.net().named_tensors("q");
    t.extend(target.net().named_tensors("q_target"));
    t
}

/// Multi-step window of `(state, action, reward)` awaiting its bootstrap state.
struct NStep {
    n: usize,
    gamma: Real,
    window: VecDeque<(Vec<Real>, ActionValue, Real)>,
}

impl NStep {
    /// Pushes one step and returns the aggregated transitions it completes,
    /// each with its length.
    fn push(&mut self, s: Vec<Real>, a: ActionValue, step: &Step, flush: bool) -> Vec<(Transition, usize)> {
        self.window.push_back((s, a, step.reward));
        let mut out = Vec::new();
        let mut emit = |w: &VecDeque<(Vec<Real>, ActionValue, Real)>| {
            let reward = w.iter().rev().fold(0.0, |acc, x| x.2 + self.gamma * acc);
            out.push((
                Transition {
                    state: w[0].0.clone(),
                    action: w[0].1.clone(),
                    reward,
                    next_state: step.next_state.clone(),
                    done: step.done,
                    truncated: step.truncated,
                },
                w.len(),
            ));
        };
        if step.done || flush {
            while !self.window.is_empty() {
                emit(&self.window);
                self.window.pop_front();
            }
        } else if self.window.len() == self.n {
            emit(&self.window);
            self.window.pop_front();
        }
        out
    }
}

fn train_dqn(mut run: Run) -> Result<RunSummary> {
    let cfg = run.cfg;
    let qc = &cfg.qlearn;
    let mut env = build_env(cfg, Split::Train)?;
    let n = discrete_actions(env.as_ref(), "qlearn")?;
    let kind = env.spec().action_kind;
    let sd = env.spec().state_dim;
    let mut rng = stream_rng(cfg.seed, "sample");
    let mut q = new_q(cfg, sd, n, &mut stream_rng(cfg.seed, "init"))?;
    let mut target = TargetNetwork::new(q.net(), TargetUpdate::HardCopy(qc.target_period as u64))?;
    let mut opt = AdamState::new(qc.lr);
    let mut buffer = if qc.prioritized {
        ReplayBuffer::prioritized(
            qc.buffer,
            PriorityConfig {
                exponent: qc.priority_exponent,
                ..PriorityConfig::default()
            },
        )?
    } else {
        ReplayBuffer::new(qc.buffer)?
    };
    let mut lens = vec![1usize; qc.buffer];
    let mut eps = epsilon_schedule(cfg)?;
    let total = cfg.total_steps;

    let result: Result<()> = (|| {
        while (run.env_steps as usize) < total {
            let mut s = env.reset(Some(episode_seed(cfg, run.episodes)));
            let mut ret = 0.0;
            let mut nstep = NStep {
                n: qc.nstep,
                gamma: cfg.gamma,
                window: VecDeque::new(),
            };
            loop {
                let a = eps.explore(&greedy_q(&q, &s)?, &kind, &mut rng)?;
                let step = env.step(&a)?;
                ret += step.reward;
                run.env_steps += 1;
                let cut = run.env_steps as usize >= total;
                for (t, len) in nstep.push(s, a, &step, cut) {
                    let slot = buffer.push(t);
                    lens[slot.index] = len;
                }
                s = step.next_state;
                if run.env_steps as usize >= qc.warmup && buffer.len() >= qc.batch {
                    let beta = qc.importance_beta + (1.0 - qc.importance_beta) * run.env_steps as Real / total as Real;
                    let loss = dqn_update(cfg, &mut q, &mut target, &mut opt, &mut buffer, &lens, beta, &mut rng)?;
                    run.updates += 1;
                    run.interval.loss("q", loss, 1.0);
                }
                run.periodic(|| q_tensors(&q, &target))?;
                if step.done || cut {
                    break;
                }
            }
            run.episodes += 1;
            run.interval.items += 1;
            run.interval.returns.push(ret);
            let eval = if run.eval_due() { Some(run.evaluate(|x| greedy_q(&q, x))?) } else { None };
            run.maybe_log(false, &[("epsilon", eps.epsilon())], eval.as_ref())?;
        }
        Ok(())
    })();
    run.guard(result, || q_tensors(&q, &target))?;
    let eval = run.evaluate(|x| greedy_q(&q, x))?;
    let t = q_tensors(&q, &target);
    run.finish(Some(t), eval)
}

#[allow(clippy::too_many_arguments)]
fn dqn_update(
    cfg: &RunConfig,
    q: &mut QFunction,
    target: &mut TargetNetwork,
    opt: &mut AdamState,
    buffer: &mut ReplayBuffer,
    lens: &[usize],
    beta: Real,
    rng: &mut ChaCha8Rng,
) -> Result<Real> {
    let qc = &cfg.qlearn;
    let (slots, batch, weights): (Vec<_>, Vec<&Transition>, Option<Vec<Real>>) = if buffer.is_prioritized() {
        let picks = buffer.sample_prioritized(qc.batch, rng)?;
        let probs: Vec<Real> = picks.iter().map(|p| p.probability).collect();
        let w = importance_weights(&probs, buffer.len(), beta);
        (picks.iter().map(|p| p.slot).collect(), picks.iter().map(|p| p.transition).collect(), Some(w))
    } else {
        let picks = buffer.sample_uniform(qc.batch, rng)?;
        (picks.iter().map(|p| p.0).collect(), picks.iter().map(|p| p.1).collect(), None)
    };
    let states = Tensor::from_rows(&batch.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>())?;
    let next = Tensor::from_rows(&batch.iter().map(|t| t.next_state.as_slice()).collect::<Vec<_>>())?;
    let online_next = q.values_batch(&next)?;
    let target_next = target.forward(&next)?;
    let targets: Vec<Real> = batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let g = cfg.gamma.powi(lens[slots[i].index] as i32);
            let done = t.bootstrap_mask(cfg.bootstrap_on_truncation) == 0.0;
            if qc.double {
                double_q_target(t.reward, online_next.row(i), target_next.row(i), done, g)
            } else {
                td0_target(t.reward, target_next.row(i), done, g)
            }
        })
        .collect();
    let actions: Vec<ActionValue> = batch.iter().map(|t| t.action.clone()).collect();
    q.net_mut().zero_grad();
    let (loss, errs) = q.regress(&states, &actions, &targets, weights.as_deref())?;
    if !loss.is_finite() {
        return Err(Error::TrainingDivergence { param: "q loss".into() });
    }
    adam_step(q.net_mut(), opt)?;
    target.update(q.net())?;
    if buffer.is_prioritized() {
        let abs: Vec<Real> = errs.iter().map(|e| e.abs()).collect();
        buffer.update_priorities(&slots, &abs)?;
    }
    Ok(loss)
}

fn table_tensor(q: &TabularQ) -> Named {
    let t = q.table();
    let (s, a) = (t.len(), t[0].len());
    vec![("q_table".into(), Tensor::new(vec![s, a], t.concat()).expect("table shape"))]
}

fn train_tabular(mut run: Run) -> Result<RunSummary> {
    let cfg = run.cfg;
    if cfg.env.name == "pointmass" || (cfg.env.time_limit > 0 && cfg.env.name != "bandit") {
        return Err(Error::Config(
            "qlearn.tabular: needs one-hot observations (chain, grid or bandit with env.time_limit = 0)".into(),
        ));
    }
    let mut env = build_env(cfg, Split::Train)?;
    let n = discrete_actions(env.as_ref(), "qlearn")?;
    let kind = env.spec().action_kind;
    let mut q = TabularQ::new(env.spec().state_dim, n, cfg.qlearn.lr)?;
    let mut eps = epsilon_schedule(cfg)?;
    let mut rng = stream_rng(cfg.seed, "sample");
    let greedy = |q: &TabularQ, s: &[Real]| ActionValue::Discrete(q.greedy(TabularQ::state_index(s)));
    while (run.env_steps as usize) < cfg.total_steps {
        let mut s = env.reset(Some(episode_seed(cfg, run.episodes)));
        let mut ret = 0.0;
        let mut td = 0.0;
        loop {
            let a = eps.explore(&greedy(&q, &s), &kind, &mut rng)?;
            let step = env.step(&a)?;
            let (si, ni) = (TabularQ::state_index(&s), TabularQ::state_index(&step.next_state));
            let done = step.done && !(step.truncated && cfg.bootstrap_on_truncation);
            let err = q.update(si, a.discrete().expect("discrete"), step.reward, ni, done, cfg.gamma);
            td += err * err;
            ret += step.reward;
            run.env_steps += 1;
            run.updates += 1;
            s = step.next_state;
            run.periodic(|| table_tensor(&q))?;
            if step.done || run.env_steps as usize >= cfg.total_steps {
                break;
            }
        }
        run.interval.loss("td_squared", td, 1.0);
        run.episodes += 1;
        run.interval.items += 1;
        run.interval.returns.push(ret);
        let eval = if run.eval_due() { Some(run.evaluate(|x| Ok(greedy(&q, x)))?) } else { None };
        run.maybe_log(false, &[("epsilon", eps.epsilon())], eval.as_ref())?;
    }
    let eval = run.evaluate(|x| Ok(greedy(&q, x)))?;
    let t = table_tensor(&q);
    run.finish(Some(t), eval)
}

fn new_reinforce(cfg: &RunConfig, env: &dyn Environment) -> Result<Reinforce> {
    let rc = &cfg.reinforce;
    let spec = env.spec();
    let mut init = stream_rng(cfg.seed, "init");
    let policy = PolicyHead::new(HeadKind::for_action_kind(&spec.action_kind), spec.state_dim, &rc.hidden, Activation::Tanh, &mut init)?;
    let baseline = if rc.baseline {
        Some(ValueFunction::new(spec.state_dim, &rc.hidden, Activation::Tanh, &mut init)?)
    } else {
        None
    };
    Ok(Reinforce::new(
        policy,
        baseline,
        ReinforceConfig {
            gamma: cfg.gamma,
            policy_lr: rc.policy_lr,
            value_lr: rc.value_lr,
            normalize_advantages: rc.normalize,
            max_episode_steps: episode_cap(env),
        },
    ))
}

fn reinforce_tensors(agent: &Reinforce) -> Named {
    let mut t = agent.policy.trunk().named_tensors("policy");
    if let Some(b) = &agent.baseline {
        t.extend(b.net().named_tensors("baseline"));
    }
    t
}

fn train_reinforce(mut run: Run) -> Result<RunSummary> {
    let cfg = run.cfg;
    let mut env = build_env(cfg, Split::Train)?;
    let mut agent = new_reinforce(cfg, env.as_ref())?;
    let mut rng = stream_rng(cfg.seed, "sample");
    let result: Result<()> = (|| {
        while (run.env_steps as usize) < cfg.total_steps {
            let mut traces = Vec::with_capacity(cfg.reinforce.episodes_per_update);
            for _ in 0..cfg.reinforce.episodes_per_update {
                let tr = agent.collect(env.as_mut(), Some(episode_seed(cfg, run.episodes)), &mut rng)?;
                run.env_steps += tr.len() as u64;
                run.episodes += 1;
                run.interval.returns.push(tr.total_reward());
                traces.push(tr);
            }
            let stats = agent.update(&traces)?;
            if !stats.policy_loss.is_finite() || !stats.value_loss.is_finite() {
                return Err(Error::TrainingDivergence { param: "reinforce loss".into() });
            }
            run.updates += 1;
            run.interval.items += 1;
            run.interval.loss("policy", stats.policy_loss, 1.0);
            if agent.baseline.is_some() {
                run.interval.loss("value", stats.value_loss, 1.0);
            }
            run.periodic(|| reinforce_tensors(&agent))?;
            let eval = if run.eval_due() { Some(run.evaluate(|x| agent.policy.act_greedy(x))?) } else { None };
            run.maybe_log(false, &[], eval.as_ref())?;
        }
        Ok(())
    })();
    run.guard(result, || reinforce_tensors(&agent))?;
    let eval = run.evaluate(|x| agent.policy.act_greedy(x))?;
    let t = reinforce_tensors(&agent);
    run.finish(Some(t), eval)
}

fn sac_config(cfg: &RunConfig) -> SacConfig {
    let s = &cfg.sac;
    SacConfig {
        gamma: cfg.gamma,
        tau: s.tau,
        actor_lr: s.actor_lr,
        critic_lr: s.critic_lr,
        alpha_lr: s.alpha_lr,
        batch_size: s.batch,
        warmup_steps: s.warmup,
        buffer_capacity: s.buffer,
        hidden: s.hidden.clone(),
        initial_alpha: s.initial_alpha,
        target_entropy: s.target_entropy,
        cadence: if s.cadence == "episode" { UpdateCadence::PerEpisode } else { UpdateCadence::PerStep },
        bootstrap_on_truncation: cfg.bootstrap_on_truncation,
    }
}

fn new_sac(cfg: &RunConfig, env: &dyn Environment) -> Result<SacAgent> {
    let spec = env.spec();
    SacAgent::new(spec.state_dim, &spec.action_kind, sac_config(cfg), &mut stream_rng(cfg.seed, "init"))
}

fn train_sac(mut run: Run) -> Result<RunSummary> {
    let cfg = run.cfg;
    let mut env = build_env(cfg, Split::Train)?;
    let mut agent = new_sac(cfg, env.as_ref())?;
    let mut rng = stream_rng(cfg.seed, "sample");
    let mut prev_updates = 0;
    let result = sac_train(
        &mut agent,
        env.as_mut(),
        cfg.total_steps,
        |k| episode_seed(cfg, k as u64),
        &mut rng,
        |ep, agent| {
            let n_up = (ep.updates - prev_updates) as Real;
            prev_updates = ep.updates;
            run.env_steps = ep.env_steps as u64;
            run.updates = ep.updates as u64;
            run.episodes += 1;
            run.interval.items += 1;
            run.interval.returns.push(ep.episode_return);
            run.interval.loss("critic1", ep.last.critic1_loss, n_up);
            run.interval.loss("critic2", ep.last.critic2_loss, n_up);
            run.interval.loss("actor", ep.last.actor_loss, n_up);
            if [ep.last.critic1_loss, ep.last.critic2_loss, ep.last.actor_loss].iter().any(|x| !x.is_finite()) {
                return Err(Error::TrainingDivergence { param: "sac loss".into() });
            }
            run.periodic(|| agent.named_tensors())?;
            let eval = if run.eval_due() { Some(run.evaluate(|x| agent.act_greedy(x))?) } else { None };
            run.maybe_log(false, &[("alpha", agent.alpha()), ("entropy", ep.last.entropy)], eval.as_ref())
        },
    );
    run.guard(result, || agent.named_tensors())?;
    let eval = run.evaluate(|x| agent.act_greedy(x))?;
    let t = agent.named_tensors();
    run.finish(Some(t), eval)
}

fn ppo_config(cfg: &RunConfig) -> PpoConfig {
    let p = &cfg.ppo;
    PpoConfig {
        clip: p.clip,
        c1: p.c1,
        c2: p.c2,
        actors: p.actors,
        steps_per_actor: p.steps_per_actor,
        epochs: p.epochs,
        minibatch: p.minibatch,
        gamma: cfg.gamma,
        lambda: p.lambda,
        learning_rate: p.lr,
        lr_decay: p.lr_decay,
        normalize_advantages: p.normalize_advantages,
        max_grad_norm: (p.max_grad_norm > 0.0).then_some(p.max_grad_norm),
        hidden: p.hidden.clone(),
        bootstrap_on_truncation: cfg.bootstrap_on_truncation,
    }
}

fn new_ppo(cfg: &RunConfig, env: &dyn Environment) -> Result<ActorCriticNet> {
    let spec = env.spec();
    ActorCriticNet::new(spec.state_dim, HeadKind::for_action_kind(&spec.action_kind), &cfg.ppo.hidden, &mut stream_rng(cfg.seed, "init"))
}

fn train_ppo(mut run: Run) -> Result<RunSummary> {
    let cfg = run.cfg;
    let pc = ppo_config(cfg);
    let mut envs: Vec<Option<Box<dyn Environment>>> = (0..pc.actors).map(|_| build_env(cfg, Split::Train).map(Some)).collect::<Result<_>>()?;
    let mut net = new_ppo(cfg, envs[0].as_deref().expect("actor env"))?;
    let threads = worker_threads(cfg.threads)?;
    let per_iter_updates = (pc.epochs * pc.batch_rows() / pc.minibatch) as u64;
    let result = ppo_train(
        &mut net,
        &pc,
        |m| envs[m].take().expect("each actor env is built once"),
        cfg.total_steps,
        cfg.seed,
        threads,
        |it, net| {
            let l = &it.last_epoch.loss;
            if !l.total.is_finite() {
                return Err(Error::TrainingDivergence { param: "ppo loss".into() });
            }
            run.env_steps = it.env_steps as u64;
            run.updates += per_iter_updates;
            run.episodes += it.episode_returns.len() as u64;
            run.interval.items += 1;
            run.interval.returns.extend(&it.episode_returns);
            run.interval.loss("policy", l.policy, 1.0);
            run.interval.loss("value", l.value, 1.0);
            run.interval.loss("entropy", l.entropy, 1.0);
            run.interval.loss("total", l.total, 1.0);
            run.periodic(|| net.named_tensors())?;
            let eval = if run.eval_due() { Some(run.evaluate(|x| net.act_greedy(x))?) } else { None };
            let f = &it.first_epoch.loss;
            run.maybe_log(
                false,
                &[
                    ("clip_fraction", l.clip_fraction),
                    ("ratio_mean", f.ratio_mean),
                    ("ratio_max", f.ratio_max),
                    ("learning_rate", it.learning_rate),
                ],
                eval.as_ref(),
            )?;
            Ok(true)
        },
    );
    run.guard(result, || net.named_tensors())?;
    let eval = run.evaluate(|x| net.act_greedy(x))?;
    let t = net.named_tensors();
    run.finish(Some(t), eval)
}

fn updown_config(cfg: &RunConfig) -> UpsideDownConfig {
    UpsideDownConfig {
        hidden: cfg.updown.hidden.clone(),
        learning_rate: cfg.updown.lr,
        horizon_conditioning: cfg.updown.horizon_conditioning,
    }
}

fn updown_tensors(l: &UpsideDownLearner) -> Named {
    let mut t = l.net.named_tensors("updown");
    t.push(("updown.command".into(), Tensor::vector(vec![l.max_reward, l.max_horizon])));
    t
}

fn train_updown(mut run: Run) -> Result<RunSummary> {
    let cfg = run.cfg;
    let uc = &cfg.updown;
    let mut env = build_env(cfg, Split::Train)?;
    let spec = env.spec();
    let mut learner = UpsideDownLearner::new(spec.state_dim, spec.action_kind.clone(), updown_config(cfg), &mut stream_rng(cfg.seed, "init"))?;
    let mut rng = stream_rng(cfg.seed, "sample");
    let cap = episode_cap(env.as_ref());
    let mut samples = Vec::new();
    while (run.episodes as usize) < uc.episodes && samples.len() < cfg.total_steps {
        let ep = crate::plan::random_command_samples(env.as_mut(), 1, cap, episode_seed(cfg, run.episodes), &mut rng)?;
        run.interval.returns.push(ep.first().map_or(0.0, |s| s.reward));
        samples.extend(ep);
        run.episodes += 1;
    }
    run.env_steps = samples.len() as u64;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let result: Result<()> = (|| {
        for epoch in 0..uc.epochs {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_indexed(cfg.seed, "shuffle", epoch as u64)));
            for chunk in order.chunks(uc.batch) {
                let batch: Vec<_> = chunk.iter().map(|&i| samples[i].clone()).collect();
                let loss = learner.train_step(&batch)?;
                if !loss.is_finite() {
                    return Err(Error::TrainingDivergence { param: "updown loss".into() });
                }
                run.updates += 1;
                run.interval.loss("command", loss, 1.0);
            }
            run.interval.items += 1;
            let eval = if run.eval_due() { Some(run.evaluate(|x| learner.act_max(x))?) } else { None };
            run.maybe_log(false, &[("command_reward", learner.max_reward)], eval.as_ref())?;
        }
        Ok(())
    })();
    run.guard(result, || updown_tensors(&learner))?;
    let eval = run.evaluate(|x| learner.act_max(x))?;
    let t = updown_tensors(&learner);
    run.finish(Some(t), eval)
}

/// Plays one episode choosing every action by MCTS from the current state.
fn plan_episode(cfg: &RunConfig, env: &mut dyn Environment, seed: u64, rng: &mut ChaCha8Rng, steps_left: usize) -> Result<(Real, usize)> {
    let model = env
        .exact_model()
        .ok_or_else(|| Error::Unsupported(format!("planning needs an exact model; `{}` has none (set env.time_limit = 0)", env.name())))?;
    let mc = mcts_config(cfg);
    let locate = |obs: &[Real]| model.state_of(obs).ok_or_else(|| Error::State("observation outside the model".into()));
    let mut s = env.reset(Some(seed));
    let mut tree = Mcts::new(&model, locate(&s)?, mc)?;
    let (mut ret, mut steps) = (0.0, 0);
    while steps < steps_left.min(episode_cap(&*env)) {
        let a = tree.search(cfg.plan.budget, rng)?;
        let step = env.step(&ActionValue::Discrete(a))?;
        ret += step.reward;
        steps += 1;
        s = step.next_state;
        if step.done {
            break;
        }
        if cfg.plan.reuse {
            tree.advance(a)?;
        } else {
            tree = Mcts::new(&model, locate(&s)?, mc)?;
        }
    }
    Ok((ret, steps))
}

fn train_plan(mut run: Run) -> Result<RunSummary> {
    let cfg = run.cfg;
    let mut env = build_env(cfg, Split::Train)?;
    let mut rng = stream_rng(cfg.seed, "sample");
    while (run.env_steps as usize) < cfg.total_steps {
        let left = cfg.total_steps - run.env_steps as usize;
        let (ret, steps) = plan_episode(cfg, env.as_mut(), episode_seed(cfg, run.episodes), &mut rng, left)?;
        run.env_steps += steps as u64;
        run.episodes += 1;
        run.interval.items += 1;
        run.interval.returns.push(ret);
        run.maybe_log(false, &[], None)?;
    }
    let mut eval_rng = stream_rng(cfg.seed, "eval");
    let mut returns = Vec::with_capacity(cfg.eval_episodes);
    for k in 0..cfg.eval_episodes {
        let (ret, _) = plan_episode(cfg, run.eval_env.as_mut(), derive_indexed(cfg.seed, "eval", k as u64), &mut eval_rng, usize::MAX)?;
        returns.push(ret);
    }
    let eval = EvalReport::new(returns);
    run.finish(None, eval)
}

fn activations_of(net: &Mlp) -> Vec<Activation> {
    net.activations()
}

/// Greedy evaluation of a checkpoint. The run configuration is read from
/// `config.txt` next to the checkpoint.
pub fn run_eval(checkpoint_path: &Path, episodes: usize) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be >= 1".into()));
    }
    let dir = checkpoint_path.parent().unwrap_or(Path::new("."));
    let cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let map: HashMap<String, Tensor> = checkpoint::into_map(checkpoint::load(checkpoint_path)?);
    let mut env = build_env(&cfg, Split::Validation)?;
    let spec = env.spec();
    let seed = derive_seed(cfg.seed, "run-eval");
    let returns = match cfg.algorithm {
        Algorithm::Qlearn if cfg.qlearn.tabular => {
            let t = map.get("q_table").ok_or_else(|| Error::Checkpoint("missing tensor `q_table`".into()))?;
            if t.rank() != 2 {
                return Err(Error::Checkpoint("q_table must be a matrix".into()));
            }
            let table: Vec<Vec<Real>> = (0..t.rows()).map(|i| t.row(i).to_vec()).collect();
            let q = TabularQ::from_table(table, cfg.qlearn.lr)?;
            evaluate(env.as_mut(), episodes, seed, |s| Ok(ActionValue::Discrete(q.greedy(TabularQ::state_index(s)))))?
        }
        Algorithm::Qlearn => {
            let n = discrete_actions(env.as_ref(), "qlearn")?;
            let fresh = new_q(&cfg, spec.state_dim, n, &mut stream_rng(0, "shape"))?;
            let net = Mlp::from_named("q", &map, &activations_of(fresh.net()))?;
            let q = QFunction::from_net(fresh.mode(), spec.state_dim, net)?;
            evaluate(env.as_mut(), episodes, seed, |s| greedy_q(&q, s))?
        }
        Algorithm::Reinforce => {
            let fresh = new_reinforce(&cfg, env.as_ref())?;
            let trunk = Mlp::from_named("policy", &map, &activations_of(fresh.policy.trunk()))?;
            let head = PolicyHead::from_trunk(fresh.policy.kind(), trunk)?;
            evaluate(env.as_mut(), episodes, seed, |s| head.act_greedy(s))?
        }
        Algorithm::Sac => {
            let mut agent = new_sac(&cfg, env.as_ref())?;
            agent.load_actor(&map)?;
            evaluate(env.as_mut(), episodes, seed, |s| agent.act_greedy(s))?
        }
        Algorithm::Ppo => {
            let net = ActorCriticNet::from_named(HeadKind::for_action_kind(&spec.action_kind), cfg.ppo.hidden.len(), &map)?;
            evaluate(env.as_mut(), episodes, seed, |s| net.act_greedy(s))?
        }
        Algorithm::Updown => {
            let mut l = UpsideDownLearner::new(spec.state_dim, spec.action_kind.clone(), updown_config(&cfg), &mut stream_rng(0, "shape"))?;
            l.net = Mlp::from_named("updown", &map, &activations_of(&l.net))?;
            let cmd = map.get("updown.command").ok_or_else(|| Error::Checkpoint("missing tensor `updown.command`".into()))?;
            if cmd.len() != 2 {
                return Err(Error::Checkpoint("updown.command must hold two values".into()));
            }
            l.max_reward = cmd.data()[0];
            l.max_horizon = cmd.data()[1];
            evaluate(env.as_mut(), episodes, seed, |s| l.act_max(s))?
        }
        Algorithm::Plan => return Err(Error::Unsupported("planning runs have no checkpoint to evaluate".into())),
    };
    Ok(EvalReport::new(returns))
}
