//! Central-difference checks of every differentiable loss.
//!
//! Relative error is `|g - g_fd| / |g_fd|` over the whole parameter vector.

use nondiff_rl::env::{ActionKind, ActionValue, Environment, GridWorld, PointMass, TimeLimit, Transition};
use nondiff_rl::ndmath::{cross_entropy_loss, mse_loss, Activation};
use nondiff_rl::onpolicy::{reinforce_loss, value_loss, ValueFunction};
use nondiff_rl::plan::upside_down_loss;
use nondiff_rl::policy::{HeadKind, PolicyHead};
use nondiff_rl::ppo::{compute_targets, ppo_loss, rollout, ActorCriticNet, PpoConfig, RolloutBatch, RolloutWorker};
use nondiff_rl::sac::{actor_loss_grad, temperature_grad, SacAgent, SacConfig};
use nondiff_rl::value::{deterministic_pg_loss, QFunction, QMode};
use nondiff_rl::{Mlp, Real, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const SEEDS: u64 = 100;
pub const TOL: Real = 1e-4;
pub const TOL_FROZEN_NOISE: Real = 1e-3;
const H: Real = 1e-6;

pub struct Check {
    pub name: &'static str,
    pub tol: Real,
    pub run: fn(u64) -> Real,
}

pub const CHECKS: &[Check] = &[
    Check { name: "mse", tol: TOL, run: mse },
    Check { name: "cross-entropy", tol: TOL, run: cross_entropy },
    Check { name: "deterministic pg", tol: TOL, run: deterministic_pg },
    Check { name: "sac critic", tol: TOL_FROZEN_NOISE, run: sac_critic },
    Check { name: "sac actor", tol: TOL_FROZEN_NOISE, run: sac_actor },
    Check { name: "sac temperature", tol: TOL_FROZEN_NOISE, run: sac_temperature },
    Check { name: "reinforce categorical", tol: TOL, run: reinforce_categorical },
    Check { name: "reinforce tanh-gaussian", tol: TOL, run: reinforce_tanh },
    Check { name: "value", tol: TOL, run: state_value },
    Check { name: "ppo joint categorical", tol: TOL, run: ppo_categorical },
    Check { name: "ppo joint tanh-gaussian", tol: TOL, run: ppo_tanh },
    Check { name: "updown categorical", tol: TOL, run: updown_categorical },
    Check { name: "updown regression", tol: TOL, run: updown_regression },
];

/// Worst relative error over all seeds and the first seed above tolerance.
pub fn sweep(check: &Check) -> (Real, Option<(u64, Real)>) {
    let mut worst: Real = 0.0;
    let mut first_fail = None;
    for seed in 0..SEEDS {
        let e = (check.run)(seed);
        if !(e <= check.tol) && first_fail.is_none() {
            first_fail = Some((seed, e));
        }
        worst = worst.max(if e.is_nan() { Real::INFINITY } else { e });
    }
    (worst, first_fail)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_rows(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| r.sample::<Real, _>(StandardNormal)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn fd(params: &[Real], mut loss: impl FnMut(&[Real]) -> Real) -> Vec<Real> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let x = p[i];
            p[i] = x + H;
            let up = loss(&p);
            p[i] = x - H;
            let down = loss(&p);
            p[i] = x;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn rel_err(analytic: &[Real], numeric: &[Real]) -> Real {
    let diff: Real = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<Real>().sqrt();
    let norm: Real = numeric.iter().map(|b| b * b).sum::<Real>().sqrt();
    diff / norm.max(1e-10)
}

fn with_params(net: &Mlp, p: &[Real]) -> Mlp {
    let mut n = net.clone();
    n.set_params_flat(p).unwrap();
    n
}

fn jitter(p: &[Real], scale: Real, r: &mut ChaCha8Rng) -> Vec<Real> {
    p.iter().map(|x| x + scale * r.sample::<Real, _>(StandardNormal)).collect()
}

fn mse(seed: u64) -> Real {
    let mut r = rng(seed);
    let mut net = Mlp::with_hidden(3, &[6, 5], 2, Activation::Tanh, &mut r).unwrap();
    let x = normal_rows(7, 3, &mut r);
    let y = normal_rows(7, 2, &mut r);
    net.zero_grad();
    let out = net.forward_train(&x).unwrap();
    let (_, g) = mse_loss(&out, &y).unwrap();
    net.backward(&g).unwrap();
    let num = fd(&net.params_flat(), |p| mse_loss(&with_params(&net, p).forward(&x).unwrap(), &y).unwrap().0);
    rel_err(&net.grads_flat(), &num)
}

fn cross_entropy(seed: u64) -> Real {
    let mut r = rng(seed);
    let mut net = Mlp::with_hidden(4, &[8], 5, Activation::Tanh, &mut r).unwrap();
    let x = Tensor::vector((0..4).map(|_| r.sample(StandardNormal)).collect());
    let label = r.random_range(0..5);
    net.zero_grad();
    let out = net.forward_train(&x).unwrap();
    let (_, g) = cross_entropy_loss(&out, label).unwrap();
    net.backward(&g).unwrap();
    let num = fd(&net.params_flat(), |p| cross_entropy_loss(&with_params(&net, p).forward(&x).unwrap(), label).unwrap().0);
    rel_err(&net.grads_flat(), &num)
}

fn deterministic_pg(seed: u64) -> Real {
    let mut r = rng(seed);
    let critic = QFunction::new(QMode::StateActionToScalar(2), 3, &[8], Activation::Tanh, &mut r).unwrap();
    let mut pi = PolicyHead::new(HeadKind::Deterministic(2), 3, &[6], Activation::Tanh, &mut r).unwrap();
    let s = normal_rows(5, 3, &mut r);
    pi.trunk_mut().zero_grad();
    deterministic_pg_loss(&mut critic.clone(), &mut pi, &s).unwrap();
    let num = fd(&pi.trunk().params_flat(), |p| {
        let mut head = PolicyHead::from_trunk(HeadKind::Deterministic(2), with_params(pi.trunk(), p)).unwrap();
        deterministic_pg_loss(&mut critic.clone(), &mut head, &s).unwrap()
    });
    rel_err(&pi.trunk().grads_flat(), &num)
}

/// Critic regression onto twin-target values computed with frozen noise.
fn sac_critic(seed: u64) -> Real {
    let mut r = rng(seed);
    let cfg = SacConfig {
        hidden: vec![8, 8],
        batch_size: 6,
        ..SacConfig::default()
    };
    let mut agent = SacAgent::new(2, &ActionKind::continuous_uniform(1, -1.0, 1.0), cfg, &mut r).unwrap();
    let mut env = PointMass::new();
    let mut s = env.reset(Some(seed));
    for _ in 0..6 {
        let a = ActionValue::Continuous(vec![r.random_range(-1.0..1.0)]);
        let st = env.step(&a).unwrap();
        agent.buffer.push(Transition {
            state: std::mem::replace(&mut s, st.next_state.clone()),
            action: a,
            reward: st.reward,
            next_state: st.next_state,
            done: st.done,
            truncated: st.truncated,
        });
    }
    let batch: Vec<_> = agent.buffer.iter().collect();
    let xi = normal_rows(batch.len(), 1, &mut r);
    let y = agent.critic_targets(&batch, &xi).unwrap();
    let states = Tensor::from_rows(&batch.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>()).unwrap();
    let actions = Tensor::from_rows(&batch.iter().map(|t| t.action.to_vec()).collect::<Vec<_>>()).unwrap();
    // zero-initialised biases put dead ReLU rows exactly on a kink
    let mut q = agent.q1.clone();
    let p = jitter(&q.net().params_flat(), 0.05, &mut r);
    q.net_mut().set_params_flat(&p).unwrap();
    q.net_mut().zero_grad();
    q.regress_pairs(&states, &actions, &y, None).unwrap();
    let num = fd(&q.net().params_flat(), |p| {
        let mut q2 = q.clone();
        q2.net_mut().set_params_flat(p).unwrap();
        q2.regress_pairs(&states, &actions, &y, None).unwrap().0
    });
    rel_err(&q.net().grads_flat(), &num)
}

fn sac_actor(seed: u64) -> Real {
    let mut r = rng(seed);
    let mut actor = PolicyHead::new(HeadKind::TanhGaussian(2), 3, &[8], Activation::Tanh, &mut r).unwrap();
    let q1 = QFunction::new(QMode::StateActionToScalar(2), 3, &[8], Activation::Tanh, &mut r).unwrap();
    let q2 = QFunction::new(QMode::StateActionToScalar(2), 3, &[8], Activation::Tanh, &mut r).unwrap();
    let s = normal_rows(6, 3, &mut r);
    let xi = normal_rows(6, 2, &mut r);
    let alpha = r.random_range(0.05..1.0);
    actor.trunk_mut().zero_grad();
    actor_loss_grad(&mut actor, &mut q1.clone(), &mut q2.clone(), &s, &xi, alpha).unwrap();
    let num = fd(&actor.trunk().params_flat(), |p| {
        let mut a = PolicyHead::from_trunk(HeadKind::TanhGaussian(2), with_params(actor.trunk(), p)).unwrap();
        actor_loss_grad(&mut a, &mut q1.clone(), &mut q2.clone(), &s, &xi, alpha).unwrap().0
    });
    rel_err(&actor.trunk().grads_flat(), &num)
}

/// Derivative with respect to `log alpha`.
fn sac_temperature(seed: u64) -> Real {
    let mut r = rng(seed);
    let log_alpha: Real = r.random_range(-3.0..1.0);
    let lps: Vec<Real> = (0..8).map(|_| r.random_range(-4.0..2.0)).collect();
    let target = -r.random_range(0.5..3.0);
    let loss = |x: &[Real]| -x[0].exp() * lps.iter().map(|lp| lp + target).sum::<Real>() / lps.len() as Real;
    rel_err(&[temperature_grad(log_alpha.exp(), &lps, target)], &fd(&[log_alpha], loss))
}

fn reinforce(kind: HeadKind, seed: u64) -> Real {
    let mut r = rng(seed);
    let mut head = PolicyHead::new(kind, 4, &[8], Activation::Tanh, &mut r).unwrap();
    let s = normal_rows(6, 4, &mut r);
    let actions: Vec<ActionValue> = (0..6).map(|i| head.sample(s.row(i), &mut r).unwrap().0).collect();
    let g: Vec<Real> = (0..6).map(|_| r.sample(StandardNormal)).collect();
    let b: Vec<Real> = (0..6).map(|_| r.sample(StandardNormal)).collect();
    head.trunk_mut().zero_grad();
    reinforce_loss(&mut head, &s, &actions, &g, Some(&b)).unwrap();
    let num = fd(&head.trunk().params_flat(), |p| {
        let mut h = PolicyHead::from_trunk(kind, with_params(head.trunk(), p)).unwrap();
        reinforce_loss(&mut h, &s, &actions, &g, Some(&b)).unwrap()
    });
    rel_err(&head.trunk().grads_flat(), &num)
}

fn reinforce_categorical(seed: u64) -> Real {
    reinforce(HeadKind::Categorical(3), seed)
}

fn reinforce_tanh(seed: u64) -> Real {
    reinforce(HeadKind::TanhGaussian(2), seed)
}

fn state_value(seed: u64) -> Real {
    let mut r = rng(seed);
    let mut v = ValueFunction::new(3, &[8], Activation::Tanh, &mut r).unwrap();
    let s = normal_rows(6, 3, &mut r);
    let y: Vec<Real> = (0..6).map(|_| r.sample(StandardNormal)).collect();
    v.net_mut().zero_grad();
    value_loss(&mut v, &s, &y).unwrap();
    let num = fd(&v.net().params_flat(), |p| {
        let mut w = ValueFunction::from_net(with_params(v.net(), p)).unwrap();
        value_loss(&mut w, &s, &y).unwrap()
    });
    rel_err(&v.net().grads_flat(), &num)
}

fn ppo_cfg() -> PpoConfig {
    PpoConfig {
        actors: 2,
        steps_per_actor: 8,
        minibatch: 16,
        hidden: vec![8],
        ..PpoConfig::default()
    }
}

/// Collects with `net`, then moves the weights so ratios differ from one.
fn ppo_check(mut net: ActorCriticNet, mut batch: RolloutBatch, r: &mut ChaCha8Rng) -> Real {
    let cfg = ppo_cfg();
    compute_targets(&mut batch, cfg.gamma, cfg.lambda, true, true).unwrap();
    let p = jitter(&net.params_flat(), 0.1, r);
    net.set_params_flat(&p).unwrap();
    let idx: Vec<usize> = (0..batch.len()).collect();
    let mut n = net.clone();
    n.zero_grad();
    ppo_loss(&mut n, &batch, &idx, &cfg).unwrap();
    let num = fd(&p, |p| {
        let mut m = net.clone();
        m.set_params_flat(p).unwrap();
        ppo_loss(&mut m, &batch, &idx, &cfg).unwrap().total
    });
    rel_err(&n.grads_flat(), &num)
}

fn ppo_categorical(seed: u64) -> Real {
    let mut r = rng(seed);
    let net = ActorCriticNet::new(10, HeadKind::Categorical(4), &ppo_cfg().hidden, &mut r).unwrap();
    let mut workers: Vec<_> = (0..2)
        .map(|m| RolloutWorker::new(m, TimeLimit::new(GridWorld::open(3, 3).unwrap(), 6).unwrap(), seed * 2 + m as u64))
        .collect();
    let batch = rollout(&net, &mut workers, 8, 1).unwrap();
    ppo_check(net, batch, &mut r)
}

fn ppo_tanh(seed: u64) -> Real {
    let mut r = rng(seed);
    let net = ActorCriticNet::new(2, HeadKind::TanhGaussian(1), &ppo_cfg().hidden, &mut r).unwrap();
    let mut workers: Vec<_> = (0..2).map(|m| RolloutWorker::new(m, PointMass::new(), seed * 2 + m as u64)).collect();
    let batch = rollout(&net, &mut workers, 8, 1).unwrap();
    ppo_check(net, batch, &mut r)
}

fn updown(kind: ActionKind, width: usize, seed: u64) -> Real {
    let mut r = rng(seed);
    let mut net = Mlp::with_hidden(4, &[8], width, Activation::Tanh, &mut r).unwrap();
    let x = normal_rows(6, 4, &mut r);
    let actions: Vec<ActionValue> = (0..6)
        .map(|_| match kind {
            ActionKind::Discrete(n) => ActionValue::Discrete(r.random_range(0..n)),
            _ => ActionValue::Continuous((0..width).map(|_| r.random_range(-1.0..1.0)).collect()),
        })
        .collect();
    net.zero_grad();
    upside_down_loss(&mut net, &kind, &x, &actions).unwrap();
    let num = fd(&net.params_flat(), |p| upside_down_loss(&mut with_params(&net, p), &kind, &x, &actions).unwrap());
    rel_err(&net.grads_flat(), &num)
}

fn updown_categorical(seed: u64) -> Real {
    updown(ActionKind::Discrete(3), 3, seed)
}

fn updown_regression(seed: u64) -> Real {
    updown(ActionKind::continuous_uniform(2, -1.0, 1.0), 2, seed)
}
