//! Flat `key = value` run configuration with dotted sections.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; missing
//! keys keep their defaults, unknown keys are rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Qlearn,
    Reinforce,
    Sac,
    Ppo,
    Updown,
    Plan,
}

impl Algorithm {
    pub const NAMES: [&'static str; 6] = ["qlearn", "reinforce", "sac", "ppo", "updown", "plan"];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Qlearn => "qlearn",
            Algorithm::Reinforce => "reinforce",
            Algorithm::Sac => "sac",
            Algorithm::Ppo => "ppo",
            Algorithm::Updown => "updown",
            Algorithm::Plan => "plan",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "qlearn" => Algorithm::Qlearn,
            "reinforce" => Algorithm::Reinforce,
            "sac" => Algorithm::Sac,
            "ppo" => Algorithm::Ppo,
            "updown" => Algorithm::Updown,
            "plan" => Algorithm::Plan,
            other => {
                return Err(Error::Config(format!(
                    "algorithm: unknown name `{other}`, expected one of {}",
                    Algorithm::NAMES.join(", ")
                )))
            }
        })
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// chain | grid | pointmass | bandit
    pub name: String,
    pub length: usize,
    pub width: usize,
    pub height: usize,
    pub obstacles: Vec<(usize, usize)>,
    pub random_start: bool,
    /// Positive cost per step for chain and grid.
    pub step_penalty: Real,
    /// Episode cap appended to the state; 0 disables it.
    pub time_limit: usize,
    /// blobs | moons | csv
    pub dataset: String,
    pub csv_path: String,
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub separation: Real,
    pub noise: Real,
    pub validation: Real,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            name: "grid".into(),
            length: 6,
            width: 4,
            height: 4,
            obstacles: Vec::new(),
            random_start: false,
            step_penalty: 0.01,
            time_limit: 100,
            dataset: "blobs".into(),
            csv_path: String::new(),
            classes: 3,
            dim: 2,
            per_class: 200,
            separation: 4.0,
            noise: 0.5,
            validation: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QlearnSection {
    pub tabular: bool,
    pub lr: Real,
    pub hidden: Vec<usize>,
    pub batch: usize,
    pub buffer: usize,
    pub warmup: usize,
    pub target_period: usize,
    pub double: bool,
    pub nstep: usize,
    pub prioritized: bool,
    pub priority_exponent: Real,
    pub importance_beta: Real,
    pub epsilon_start: Real,
    pub epsilon_end: Real,
    pub epsilon_decay_steps: usize,
    /// linear | exponential
    pub epsilon_decay: String,
}

impl Default for QlearnSection {
    fn default() -> Self {
        Self {
            tabular: false,
            lr: 1e-3,
            hidden: vec![64, 64],
            batch: 64,
            buffer: 50_000,
            warmup: 500,
            target_period: 1000,
            double: true,
            nstep: 1,
            prioritized: false,
            priority_exponent: 0.6,
            importance_beta: 0.4,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 10_000,
            epsilon_decay: "linear".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReinforceSection {
    pub policy_lr: Real,
    pub value_lr: Real,
    pub hidden: Vec<usize>,
    pub baseline: bool,
    pub normalize: bool,
    pub episodes_per_update: usize,
}

impl Default for ReinforceSection {
    fn default() -> Self {
        Self {
            policy_lr: 3e-4,
            value_lr: 1e-3,
            hidden: vec![64, 64],
            baseline: true,
            normalize: false,
            episodes_per_update: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacSection {
    pub actor_lr: Real,
    pub critic_lr: Real,
    pub alpha_lr: Real,
    pub batch: usize,
    pub warmup: usize,
    pub buffer: usize,
    pub hidden: Vec<usize>,
    pub tau: Real,
    pub initial_alpha: Real,
    /// `None` selects minus the action dimension.
    pub target_entropy: Option<Real>,
    /// step | episode
    pub cadence: String,
}

impl Default for SacSection {
    fn default() -> Self {
        Self {
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            batch: 256,
            warmup: 1000,
            buffer: 100_000,
            hidden: vec![64, 64],
            tau: 0.995,
            initial_alpha: 1.0,
            target_entropy: None,
            cadence: "step".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoSection {
    pub clip: Real,
    pub c1: Real,
    pub c2: Real,
    pub actors: usize,
    pub steps_per_actor: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub lambda: Real,
    pub lr: Real,
    pub lr_decay: bool,
    pub normalize_advantages: bool,
    /// 0 disables clipping.
    pub max_grad_norm: Real,
    pub hidden: Vec<usize>,
}

impl Default for PpoSection {
    fn default() -> Self {
        Self {
            clip: 0.2,
            c1: 0.5,
            c2: 0.01,
            actors: 8,
            steps_per_actor: 128,
            epochs: 4,
            minibatch: 256,
            lambda: 0.95,
            lr: 3e-4,
            lr_decay: true,
            normalize_advantages: true,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdownSection {
    pub hidden: Vec<usize>,
    pub lr: Real,
    pub horizon_conditioning: bool,
    /// Random episodes collected before training.
    pub episodes: usize,
    pub epochs: usize,
    pub batch: usize,
}

impl Default for UpdownSection {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            lr: 1e-3,
            horizon_conditioning: false,
            episodes: 500,
            epochs: 50,
            batch: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSection {
    pub budget: usize,
    pub gamma: Real,
    pub exploration: Real,
    pub max_depth: usize,
    /// visits | mean
    pub root_rule: String,
    pub reuse: bool,
    /// Depth of the exhaustive oracle in head-to-head runs.
    pub horizon: usize,
    pub trials: usize,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            budget: 1000,
            gamma: 0.95,
            exploration: std::f64::consts::SQRT_2,
            max_depth: 100,
            root_rule: "visits".into(),
            reuse: true,
            horizon: 10,
            trials: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifySection {
    pub seeds: usize,
    pub epochs: usize,
    /// Learning rate of the squared-error vector-Q model.
    pub mse_lr: Real,
    /// Learning rate of the cross-entropy policy.
    pub ce_lr: Real,
    pub hidden: Vec<usize>,
    pub batch: usize,
}

impl Default for ClassifySection {
    fn default() -> Self {
        Self {
            seeds: 5,
            epochs: 100,
            mse_lr: 1e-2,
            ce_lr: 1e-2,
            hidden: vec![32],
            batch: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub total_steps: usize,
    pub gamma: Real,
    /// Env steps between evaluations; 0 evaluates only at the end.
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Episodes (or PPO iterations, updown epochs) per metrics row.
    pub log_every: usize,
    /// Env steps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub threads: usize,
    pub bootstrap_on_truncation: bool,
    pub env: EnvConfig,
    pub qlearn: QlearnSection,
    pub reinforce: ReinforceSection,
    pub sac: SacSection,
    pub ppo: PpoSection,
    pub updown: UpdownSection,
    pub plan: PlanSection,
    pub classify: ClassifySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Qlearn,
            seed: 0,
            total_steps: 100_000,
            gamma: 0.99,
            eval_every: 0,
            eval_episodes: 20,
            log_every: 1,
            checkpoint_every: 0,
            threads: 1,
            bootstrap_on_truncation: true,
            env: EnvConfig::default(),
            qlearn: QlearnSection::default(),
            reinforce: ReinforceSection::default(),
            sac: SacSection::default(),
            ppo: PpoSection::default(),
            updown: UpdownSection::default(),
            plan: PlanSection::default(),
            classify: ClassifySection::default(),
        }
    }
}

enum Slot<'a> {
    Real(&'a mut Real),
    Usize(&'a mut usize),
    U64(&'a mut u64),
    Bool(&'a mut bool),
    Text(&'a mut String),
    Choice(&'a mut String, &'static [&'static str]),
    Sizes(&'a mut Vec<usize>),
    Cells(&'a mut Vec<(usize, usize)>),
    AutoReal(&'a mut Option<Real>),
    Algo(&'a mut Algorithm),
}

fn bad(key: &str, expected: &str, got: &str) -> Error {
    Error::Config(format!("{key}: expected {expected}, got `{got}`"))
}

impl Slot<'_> {
    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match self {
            Slot::Real(x) => **x = v.parse().map_err(|_| bad(key, "a number", v))?,
            Slot::Usize(x) => **x = v.parse().map_err(|_| bad(key, "a non-negative integer", v))?,
            Slot::U64(x) => **x = v.parse().map_err(|_| bad(key, "a non-negative integer", v))?,
            Slot::Bool(x) => {
                **x = match v {
                    "true" => true,
                    "false" => false,
                    _ => return Err(bad(key, "true or false", v)),
                }
            }
            Slot::Text(x) => **x = v.to_string(),
            Slot::Choice(x, options) => {
                if !options.contains(&v) {
                    return Err(bad(key, &format!("one of {}", options.join(", ")), v));
                }
                **x = v.to_string();
            }
            Slot::Sizes(x) => {
                **x = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(|p| p.trim().parse().map_err(|_| bad(key, "comma-separated integers", v)))
                        .collect::<Result<_>>()?
                }
            }
            Slot::Cells(x) => {
                **x = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(|p| {
                            let (a, b) = p.trim().split_once(':').ok_or_else(|| bad(key, "cells as x:y,x:y", v))?;
                            Ok((
                                a.parse().map_err(|_| bad(key, "cells as x:y,x:y", v))?,
                                b.parse().map_err(|_| bad(key, "cells as x:y,x:y", v))?,
                            ))
                        })
                        .collect::<Result<_>>()?
                }
            }
            Slot::AutoReal(x) => {
                **x = if v == "auto" {
                    None
                } else {
                    Some(v.parse().map_err(|_| bad(key, "a number or auto", v))?)
                }
            }
            Slot::Algo(x) => **x = v.parse()?,
        }
        Ok(())
    }

    fn render(&self) -> String {
        let join = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match self {
            Slot::Real(x) => x.to_string(),
            Slot::Usize(x) => x.to_string(),
            Slot::U64(x) => x.to_string(),
            Slot::Bool(x) => x.to_string(),
            Slot::Text(x) | Slot::Choice(x, _) => (*x).clone(),
            Slot::Sizes(x) => join(x),
            Slot::Cells(x) => x.iter().map(|(a, b)| format!("{a}:{b}")).collect::<Vec<_>>().join(","),
            Slot::AutoReal(x) => x.map_or("auto".into(), |v| v.to_string()),
            Slot::Algo(x) => x.to_string(),
        }
    }
}

impl RunConfig {
    fn slots(&mut self) -> Vec<(&'static str, Slot<'_>)> {
        let e = &mut self.env;
        let q = &mut self.qlearn;
        let r = &mut self.reinforce;
        let s = &mut self.sac;
        let p = &mut self.ppo;
        let u = &mut self.updown;
        let pl = &mut self.plan;
        let c = &mut self.classify;
        vec![
            ("algorithm", Slot::Algo(&mut self.algorithm)),
            ("seed", Slot::U64(&mut self.seed)),
            ("total_steps", Slot::Usize(&mut self.total_steps)),
            ("gamma", Slot::Real(&mut self.gamma)),
            ("eval_every", Slot::Usize(&mut self.eval_every)),
            ("eval_episodes", Slot::Usize(&mut self.eval_episodes)),
            ("log_every", Slot::Usize(&mut self.log_every)),
            ("checkpoint_every", Slot::Usize(&mut self.checkpoint_every)),
            ("threads", Slot::Usize(&mut self.threads)),
            ("bootstrap_on_truncation", Slot::Bool(&mut self.bootstrap_on_truncation)),
            ("env.name", Slot::Choice(&mut e.name, &["chain", "grid", "pointmass", "bandit"])),
            ("env.length", Slot::Usize(&mut e.length)),
            ("env.width", Slot::Usize(&mut e.width)),
            ("env.height", Slot::Usize(&mut e.height)),
            ("env.obstacles", Slot::Cells(&mut e.obstacles)),
            ("env.random_start", Slot::Bool(&mut e.random_start)),
            ("env.step_penalty", Slot::Real(&mut e.step_penalty)),
            ("env.time_limit", Slot::Usize(&mut e.time_limit)),
            ("env.dataset", Slot::Choice(&mut e.dataset, &["blobs", "moons", "csv"])),
            ("env.csv_path", Slot::Text(&mut e.csv_path)),
            ("env.classes", Slot::Usize(&mut e.classes)),
            ("env.dim", Slot::Usize(&mut e.dim)),
            ("env.per_class", Slot::Usize(&mut e.per_class)),
            ("env.separation", Slot::Real(&mut e.separation)),
            ("env.noise", Slot::Real(&mut e.noise)),
            ("env.validation", Slot::Real(&mut e.validation)),
            ("qlearn.tabular", Slot::Bool(&mut q.tabular)),
            ("qlearn.lr", Slot::Real(&mut q.lr)),
            ("qlearn.hidden", Slot::Sizes(&mut q.hidden)),
            ("qlearn.batch", Slot::Usize(&mut q.batch)),
            ("qlearn.buffer", Slot::Usize(&mut q.buffer)),
            ("qlearn.warmup", Slot::Usize(&mut q.warmup)),
            ("qlearn.target_period", Slot::Usize(&mut q.target_period)),
            ("qlearn.double", Slot::Bool(&mut q.double)),
            ("qlearn.nstep", Slot::Usize(&mut q.nstep)),
            ("qlearn.prioritized", Slot::Bool(&mut q.prioritized)),
            ("qlearn.priority_exponent", Slot::Real(&mut q.priority_exponent)),
            ("qlearn.importance_beta", Slot::Real(&mut q.importance_beta)),
            ("qlearn.epsilon_start", Slot::Real(&mut q.epsilon_start)),
            ("qlearn.epsilon_end", Slot::Real(&mut q.epsilon_end)),
            ("qlearn.epsilon_decay_steps", Slot::Usize(&mut q.epsilon_decay_steps)),
            ("qlearn.epsilon_decay", Slot::Choice(&mut q.epsilon_decay, &["linear", "exponential"])),
            ("reinforce.policy_lr", Slot::Real(&mut r.policy_lr)),
            ("reinforce.value_lr", Slot::Real(&mut r.value_lr)),
            ("reinforce.hidden", Slot::Sizes(&mut r.hidden)),
            ("reinforce.baseline", Slot::Bool(&mut r.baseline)),
            ("reinforce.normalize", Slot::Bool(&mut r.normalize)),
            ("reinforce.episodes_per_update", Slot::Usize(&mut r.episodes_per_update)),
            ("sac.actor_lr", Slot::Real(&mut s.actor_lr)),
            ("sac.critic_lr", Slot::Real(&mut s.critic_lr)),
            ("sac.alpha_lr", Slot::Real(&mut s.alpha_lr)),
            ("sac.batch", Slot::Usize(&mut s.batch)),
            ("sac.warmup", Slot::Usize(&mut s.warmup)),
            ("sac.buffer", Slot::Usize(&mut s.buffer)),
            ("sac.hidden", Slot::Sizes(&mut s.hidden)),
            ("sac.tau", Slot::Real(&mut s.tau)),
            ("sac.initial_alpha", Slot::Real(&mut s.initial_alpha)),
            ("sac.target_entropy", Slot::AutoReal(&mut s.target_entropy)),
            ("sac.cadence", Slot::Choice(&mut s.cadence, &["step", "episode"])),
            ("ppo.clip", Slot::Real(&mut p.clip)),
            ("ppo.c1", Slot::Real(&mut p.c1)),
            ("ppo.c2", Slot::Real(&mut p.c2)),
            ("ppo.actors", Slot::Usize(&mut p.actors)),
            ("ppo.steps_per_actor", Slot::Usize(&mut p.steps_per_actor)),
            ("ppo.epochs", Slot::Usize(&mut p.epochs)),
            ("ppo.minibatch", Slot::Usize(&mut p.minibatch)),
            ("ppo.lambda", Slot::Real(&mut p.lambda)),
            ("ppo.lr", Slot::Real(&mut p.lr)),
            ("ppo.lr_decay", Slot::Bool(&mut p.lr_decay)),
            ("ppo.normalize_advantages", Slot::Bool(&mut p.normalize_advantages)),
            ("ppo.max_grad_norm", Slot::Real(&mut p.max_grad_norm)),
            ("ppo.hidden", Slot::Sizes(&mut p.hidden)),
            ("updown.hidden", Slot::Sizes(&mut u.hidden)),
            ("updown.lr", Slot::Real(&mut u.lr)),
            ("updown.horizon_conditioning", Slot::Bool(&mut u.horizon_conditioning)),
            ("updown.episodes", Slot::Usize(&mut u.episodes)),
            ("updown.epochs", Slot::Usize(&mut u.epochs)),
            ("updown.batch", Slot::Usize(&mut u.batch)),
            ("plan.budget", Slot::Usize(&mut pl.budget)),
            ("plan.gamma", Slot::Real(&mut pl.gamma)),
            ("plan.exploration", Slot::Real(&mut pl.exploration)),
            ("plan.max_depth", Slot::Usize(&mut pl.max_depth)),
            ("plan.root_rule", Slot::Choice(&mut pl.root_rule, &["visits", "mean"])),
            ("plan.reuse", Slot::Bool(&mut pl.reuse)),
            ("plan.horizon", Slot::Usize(&mut pl.horizon)),
            ("plan.trials", Slot::Usize(&mut pl.trials)),
            ("classify.seeds", Slot::Usize(&mut c.seeds)),
            ("classify.epochs", Slot::Usize(&mut c.epochs)),
            ("classify.mse_lr", Slot::Real(&mut c.mse_lr)),
            ("classify.ce_lr", Slot::Real(&mut c.ce_lr)),
            ("classify.hidden", Slot::Sizes(&mut c.hidden)),
            ("classify.batch", Slot::Usize(&mut c.batch)),
        ]
    }

    /// Assigns one key; the value is not range-checked until [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        for (k, mut slot) in self.slots() {
            if k == key {
                return slot.set(key, value);
            }
        }
        Err(Error::Config(format!("unknown key `{key}`")))
    }

    /// Strict parse with defaults filled in, then validation.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
            cfg.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Every key in canonical order; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut c = self.clone();
        let mut out = String::new();
        for (k, slot) in c.slots() {
            out.push_str(&format!("{k} = {}\n", slot.render()));
        }
        out
    }

    pub fn keys() -> Vec<&'static str> {
        RunConfig::default().slots().into_iter().map(|(k, _)| k).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |k: &str, v: Real| check(k, (0.0..=1.0).contains(&v), "must lie in [0, 1]", v);
        let pos = |k: &str, v: Real| check(k, v > 0.0 && v.is_finite(), "must be > 0", v);
        let nonneg = |k: &str, v: Real| check(k, v >= 0.0 && v.is_finite(), "must be >= 0", v);
        let one = |k: &str, v: usize| check(k, v >= 1, "must be >= 1", v);
        let hidden = |k: &str, v: &[usize]| check(k, !v.is_empty() && v.iter().all(|&h| h > 0), "must list positive widths", format!("{v:?}"));

        unit("gamma", self.gamma)?;
        one("total_steps", self.total_steps)?;
        one("eval_episodes", self.eval_episodes)?;
        one("log_every", self.log_every)?;
        one("threads", self.threads)?;
        let e = &self.env;
        check("env.length", e.length >= 2, "must be >= 2", e.length)?;
        one("env.width", e.width)?;
        one("env.height", e.height)?;
        check("env.width", e.width * e.height >= 2, "grid needs at least two cells", e.width * e.height)?;
        for &(x, y) in &e.obstacles {
            check("env.obstacles", x < e.width && y < e.height, "cell outside the grid", format!("{x}:{y}"))?;
        }
        nonneg("env.step_penalty", e.step_penalty)?;
        check("env.classes", e.classes >= 2, "must be >= 2", e.classes)?;
        one("env.dim", e.dim)?;
        one("env.per_class", e.per_class)?;
        nonneg("env.separation", e.separation)?;
        nonneg("env.noise", e.noise)?;
        check("env.validation", e.validation > 0.0 && e.validation < 1.0, "must lie in (0, 1)", e.validation)?;
        check("env.csv_path", e.dataset != "csv" || !e.csv_path.is_empty(), "required when env.dataset = csv", "")?;

        let q = &self.qlearn;
        pos("qlearn.lr", q.lr)?;
        check("qlearn.lr", !q.tabular || q.lr <= 1.0, "tabular learning rate must be <= 1", q.lr)?;
        hidden("qlearn.hidden", &q.hidden)?;
        one("qlearn.batch", q.batch)?;
        check("qlearn.buffer", q.buffer >= q.batch, "must be >= qlearn.batch", q.buffer)?;
        one("qlearn.target_period", q.target_period)?;
        one("qlearn.nstep", q.nstep)?;
        nonneg("qlearn.priority_exponent", q.priority_exponent)?;
        unit("qlearn.importance_beta", q.importance_beta)?;
        unit("qlearn.epsilon_start", q.epsilon_start)?;
        unit("qlearn.epsilon_end", q.epsilon_end)?;
        one("qlearn.epsilon_decay_steps", q.epsilon_decay_steps)?;

        let r = &self.reinforce;
        pos("reinforce.policy_lr", r.policy_lr)?;
        pos("reinforce.value_lr", r.value_lr)?;
        hidden("reinforce.hidden", &r.hidden)?;
        one("reinforce.episodes_per_update", r.episodes_per_update)?;

        let s = &self.sac;
        pos("sac.actor_lr", s.actor_lr)?;
        pos("sac.critic_lr", s.critic_lr)?;
        pos("sac.alpha_lr", s.alpha_lr)?;
        one("sac.batch", s.batch)?;
        check("sac.buffer", s.buffer >= s.batch, "must be >= sac.batch", s.buffer)?;
        hidden("sac.hidden", &s.hidden)?;
        unit("sac.tau", s.tau)?;
        pos("sac.initial_alpha", s.initial_alpha)?;

        let p = &self.ppo;
        pos("ppo.clip", p.clip)?;
        nonneg("ppo.c1", p.c1)?;
        nonneg("ppo.c2", p.c2)?;
        one("ppo.actors", p.actors)?;
        one("ppo.steps_per_actor", p.steps_per_actor)?;
        one("ppo.epochs", p.epochs)?;
        one("ppo.minibatch", p.minibatch)?;
        check(
            "ppo.minibatch",
            (p.actors * p.steps_per_actor).is_multiple_of(p.minibatch),
            "must divide ppo.actors * ppo.steps_per_actor",
            p.minibatch,
        )?;
        unit("ppo.lambda", p.lambda)?;
        pos("ppo.lr", p.lr)?;
        nonneg("ppo.max_grad_norm", p.max_grad_norm)?;
        hidden("ppo.hidden", &p.hidden)?;

        let u = &self.updown;
        hidden("updown.hidden", &u.hidden)?;
        pos("updown.lr", u.lr)?;
        one("updown.episodes", u.episodes)?;
        one("updown.epochs", u.epochs)?;
        one("updown.batch", u.batch)?;

        let pl = &self.plan;
        one("plan.budget", pl.budget)?;
        check("plan.gamma", pl.gamma > 0.0 && pl.gamma <= 1.0, "must lie in (0, 1]", pl.gamma)?;
        nonneg("plan.exploration", pl.exploration)?;
        one("plan.max_depth", pl.max_depth)?;
        one("plan.horizon", pl.horizon)?;
        one("plan.trials", pl.trials)?;

        let c = &self.classify;
        one("classify.seeds", c.seeds)?;
        one("classify.epochs", c.epochs)?;
        pos("classify.mse_lr", c.mse_lr)?;
        pos("classify.ce_lr", c.ce_lr)?;
        hidden("classify.hidden", &c.hidden)?;
        one("classify.batch", c.batch)?;
        Ok(())
    }
}

fn check(key: &str, ok: bool, msg: &str, got: impl fmt::Display) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{key}: {msg}, got {got}")))
    }
}
