//! Run configuration, environment factory, metrics logging, checkpointing
//! and the training, evaluation, planning and classification drivers.
//!
//! Every random stream of a run is derived from `RunConfig::seed` with
//! [`crate::seeding`]: `data` (dataset generation and split), `init`
//! (network weights), `sample` (actions and minibatches), `episode/k`
//! (training reset seeds), `eval/k` (evaluation reset seeds) and, for PPO,
//! `actor/m` and `shuffle/i`.

mod classify;
pub mod config;
pub mod metrics;
mod train;

use std::io::Write;
use std::path::Path;

pub use classify::{run_classify_experiment, ClassifyReport, ClassifyRow};
pub use config::{Algorithm, RunConfig};
pub use metrics::{read_metrics, MetricsLog, MetricsRow};
pub use train::{run_eval, run_train, EvalReport, RunSummary};

use crate::env::{
    gaussian_blobs, two_moons, ActionValue, ChainWorld, DatasetBandit, Environment, GridWorld, GridWorldConfig, PointMass, TimeLimit,
};
use crate::error::{Error, Result};
use crate::plan::{head_to_head, AgreementRow, MctsConfig, RootRule};
use crate::seeding::{derive_indexed, derive_seed, stream_rng};
use crate::Real;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "NONDIFF_RL_THREADS";

/// `requested` capped by [`THREADS_ENV`] when it is set.
pub fn worker_threads(requested: usize) -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let cap: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&c| c >= 1)
                .ok_or_else(|| Error::Config(format!("{THREADS_ENV}: expected a positive integer, got `{v}`")))?;
            Ok(requested.clamp(1, cap))
        }
        Err(_) => Ok(requested.max(1)),
    }
}

/// Which part of a dataset an environment serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

/// Training and validation bandits for the configured dataset.
pub fn build_datasets(cfg: &RunConfig) -> Result<(DatasetBandit, DatasetBandit)> {
    let e = &cfg.env;
    let full = match e.dataset.as_str() {
        "csv" => DatasetBandit::from_csv(Path::new(&e.csv_path))?,
        kind => {
            let mut rng = stream_rng(cfg.seed, "data");
            let (xs, ys) = if kind == "moons" {
                two_moons(e.per_class, e.noise, &mut rng)
            } else {
                gaussian_blobs(e.per_class, e.classes, e.dim, e.separation, e.noise, &mut rng)
            };
            let classes = if kind == "moons" { 2 } else { e.classes };
            DatasetBandit::new(xs, ys, classes)?
        }
    };
    full.split(e.validation, derive_seed(cfg.seed, "data/split"))
}

/// Builds the configured environment. Bandits draw from the training or
/// validation split; every other environment ignores `split`.
pub fn build_env(cfg: &RunConfig, split: Split) -> Result<Box<dyn Environment>> {
    let e = &cfg.env;
    let base: Box<dyn Environment> = match e.name.as_str() {
        "chain" => Box::new(ChainWorld::new(e.length)?.with_step_penalty(-e.step_penalty)),
        "grid" => {
            let mut g = GridWorldConfig::open(e.width, e.height);
            g.obstacles = e.obstacles.clone();
            g.step_penalty = e.step_penalty;
            if e.random_start {
                g.start = None;
            }
            Box::new(GridWorld::new(g)?)
        }
        "pointmass" => Box::new(PointMass::new()),
        "bandit" => {
            let (train, val) = build_datasets(cfg)?;
            Box::new(if split == Split::Train { train } else { val })
        }
        other => return Err(Error::Config(format!("env.name: unknown environment `{other}`"))),
    };
    let finite_grid = matches!(e.name.as_str(), "chain" | "grid");
    Ok(if finite_grid && e.time_limit > 0 {
        Box::new(TimeLimit::new(base, e.time_limit)?)
    } else {
        base
    })
}

/// Step cap for one evaluation or planning episode.
pub(crate) fn episode_cap(env: &dyn Environment) -> usize {
    env.spec().max_episode_steps.unwrap_or(1000)
}

/// Returns of `episodes` greedy episodes, reset with seeds `eval/k`.
pub fn evaluate(
    env: &mut dyn Environment,
    episodes: usize,
    seed: u64,
    mut policy: impl FnMut(&[Real]) -> Result<ActionValue>,
) -> Result<Vec<Real>> {
    let cap = episode_cap(env);
    let mut out = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let mut s = env.reset(Some(derive_indexed(seed, "eval", k as u64)));
        let mut ret = 0.0;
        for _ in 0..cap {
            let step = env.step(&policy(&s)?)?;
            ret += step.reward;
            s = step.next_state;
            if step.done {
                break;
            }
        }
        out.push(ret);
    }
    Ok(out)
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[Real]) -> (Real, Real) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as Real;
    let mean = xs.iter().sum::<Real>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<Real>() / n;
    (mean, var.sqrt())
}

pub(crate) fn mcts_config(cfg: &RunConfig) -> MctsConfig {
    MctsConfig {
        exploration: cfg.plan.exploration,
        gamma: cfg.plan.gamma,
        max_depth: cfg.plan.max_depth,
        root_rule: if cfg.plan.root_rule == "mean" { RootRule::MaxMean } else { RootRule::MaxVisits },
    }
}

/// MCTS against the exhaustive oracle from the start state of the
/// configured environment, which must expose an exact model.
pub fn run_plan(cfg: &RunConfig, budget: usize) -> Result<AgreementRow> {
    let env = build_env(cfg, Split::Train)?;
    let model = env
        .exact_model()
        .ok_or_else(|| Error::Unsupported(format!("planning needs an exact model; `{}` has none (set env.time_limit = 0)", env.name())))?;
    let label = match cfg.env.name.as_str() {
        "chain" => format!("chain{}", cfg.env.length),
        _ => format!("grid{}x{}", cfg.env.width, cfg.env.height),
    };
    head_to_head(&label, &model, budget, cfg.plan.trials, cfg.plan.horizon, &mcts_config(cfg), cfg.seed)
}

pub fn write_agreement_csv<W: Write>(mut out: W, rows: &[AgreementRow]) -> Result<()> {
    writeln!(out, "{}", AgreementRow::CSV_HEADER)?;
    for r in rows {
        writeln!(out, "{}", r.to_csv())?;
    }
    Ok(())
}
