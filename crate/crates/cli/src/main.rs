use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nondiff_rl::harness::{run_classify_experiment, run_eval, run_plan, run_train, write_agreement_csv, RunConfig};
use nondiff_rl::Error;

#[derive(Parser)]
#[command(name = "nondiff-rl", version, about = "Seeded desk-scale reinforcement learning runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the algorithm named in a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to `runs/<algorithm>-<seed>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy evaluation of a saved checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
    },
    /// MCTS agreement with the exhaustive optimum, as CSV.
    Plan {
        /// chain or grid; sizes come from `--config` or the defaults.
        #[arg(long)]
        env: String,
        /// Simulations per search; repeat for several rows.
        #[arg(long, required = true)]
        budget: Vec<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Squared-error Q against cross-entropy on a synthetic dataset.
    Classify {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path) -> Result<RunConfig, Error> {
    RunConfig::load(path).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = out.unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}", cfg.algorithm, cfg.seed)));
            let s = run_train(&cfg, &out)?;
            println!("algorithm: {}", s.algorithm);
            println!("env steps: {}  updates: {}  episodes: {}", s.env_steps, s.updates, s.episodes);
            println!("eval: {:.4} +/- {:.4} over {} greedy episodes", s.eval.mean, s.eval.std, s.eval.returns.len());
            println!("metrics: {}", s.metrics_path.display());
            if let Some(p) = s.checkpoint_path {
                println!("checkpoint: {}", p.display());
            }
        }
        Command::Eval { checkpoint, episodes } => {
            let r = run_eval(&checkpoint, episodes)?;
            println!("eval: {:.4} +/- {:.4} over {} greedy episodes", r.mean, r.std, r.returns.len());
        }
        Command::Plan { env, budget, config, trials, seed, out } => {
            let mut cfg = match &config {
                Some(p) => load(p)?,
                None => RunConfig::default(),
            };
            cfg.set("env.name", &env)?;
            cfg.env.time_limit = 0;
            if let Some(t) = trials {
                cfg.plan.trials = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let rows = budget.iter().map(|&b| run_plan(&cfg, b)).collect::<Result<Vec<_>, _>>()?;
            match out {
                Some(p) => write_agreement_csv(BufWriter::new(File::create(p)?), &rows)?,
                None => write_agreement_csv(io::stdout().lock(), &rows)?,
            }
        }
        Command::Classify { config } => {
            let report = run_classify_experiment(&load(&config)?)?;
            print!("{}", report.to_table());
            io::stdout().flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}
