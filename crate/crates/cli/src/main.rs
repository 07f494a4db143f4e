//! `preheat`: simulation, training, evaluation, baseline comparison and
//! film-voltage sweep.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use preheat_core::electrochem::Fidelity;
use preheat_core::experiments::{
    compare, evaluate_run, load_policy, run_scenario, run_vmax_sweep, train_policy, write_compare, write_json,
    write_scenario, write_sweep, RunConfig, ScenarioKind,
};
use preheat_core::rl::GaussianPolicy;

#[derive(Parser)]
#[command(name = "preheat", version, about = "Combined film and pulse preheating of lithium-ion cells")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["dfn", "reduced"])]
    fidelity: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace.
    Simulate {
        /// ptc-only, pulse-only or combined-policy.
        #[arg(long)]
        scenario: Option<String>,
        /// Trained policy for combined-policy.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// One trace row per substep.
        #[arg(long)]
        per_substep: bool,
    },
    /// Train a policy; with --all-seeds, one per configured seed.
    Train {
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        all_seeds: bool,
    },
    /// Roll out a trained policy and the random baseline.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Film-only, combined-policy and pulse-only runs from the same state.
    Compare {
        /// Trains a policy first when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Combined heating at each film voltage limit.
    Sweep {
        /// Reuse one policy at every level instead of training per level.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Comma-separated limits, V.
        #[arg(long, value_delimiter = ',')]
        v_max: Option<Vec<f64>>,
    },
}

fn base_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(f) = &c.fidelity {
        cfg.env.fidelity = f.parse::<Fidelity>()?;
    }
    Ok(cfg)
}

fn policy_from(cfg: &RunConfig) -> Result<GaussianPolicy> {
    let p = cfg.checkpoint.as_ref().context("a checkpoint is required")?;
    load_policy(p).with_context(|| format!("loading {}", p.display()))
}

/// Trains in `dir` and returns the learned policy.
fn train_into(cfg: &RunConfig, dir: &Path) -> Result<GaussianPolicy> {
    let params = cfg.load_params()?;
    let (trainer, metrics) = train_policy(cfg, params, cfg.seed, Some(dir))?;
    if let Some(m) = metrics.last() {
        eprintln!(
            "seed {}: {} episodes, last return {:.2}",
            cfg.seed, m.episode, m.episode_return
        );
    }
    Ok(trainer.learner().policy().clone())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli.common)?;
    match cli.command {
        Command::Simulate {
            scenario,
            checkpoint,
            per_substep,
        } => {
            if let Some(s) = scenario {
                cfg.scenario = s.parse()?;
            }
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            cfg.per_substep |= per_substep;
            cfg.validate()?;
            let kind = cfg.scenario;
            if !matches!(kind, ScenarioKind::PtcOnly | ScenarioKind::PulseOnly | ScenarioKind::CombinedPolicy) {
                bail!("simulate runs ptc-only, pulse-only or combined-policy, not {kind}");
            }
            let policy = match kind {
                ScenarioKind::CombinedPolicy => Some(policy_from(&cfg)?),
                _ => None,
            };
            let s = run_scenario(kind, &cfg, cfg.load_params()?, policy.as_ref())?;
            write_scenario(&cfg.out, kind.name(), &s)?;
            println!("{}", serde_json_line(&s.report)?);
        }
        Command::Train {
            episodes,
            resume,
            all_seeds,
        } => {
            if let Some(n) = episodes {
                cfg.train.episodes = n;
            }
            if resume.is_some() {
                cfg.resume = resume;
            }
            cfg.validate()?;
            if all_seeds {
                for &seed in &cfg.seeds.clone() {
                    let c = RunConfig { seed, ..cfg.clone() };
                    train_into(&c, &cfg.out.join(format!("seed_{seed}")))?;
                }
            } else {
                train_into(&cfg, &cfg.out)?;
            }
        }
        Command::Evaluate { checkpoint, episodes } => {
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            if let Some(n) = episodes {
                cfg.eval_episodes = n;
            }
            cfg.validate()?;
            let policy = policy_from(&cfg)?;
            let r = evaluate_run(&cfg, cfg.load_params()?, &policy, cfg.seed, Some(&cfg.out))?;
            println!(
                "policy return {:.3}, random return {:.3}",
                r.policy.mean_return, r.random.mean_return
            );
        }
        Command::Compare { checkpoint, episodes } => {
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            if let Some(n) = episodes {
                cfg.train.episodes = n;
            }
            cfg.validate()?;
            let policy = match &cfg.checkpoint {
                Some(_) => policy_from(&cfg)?,
                None => train_into(&cfg, &cfg.out.join("train"))?,
            };
            let (runs, report) = compare(&cfg, cfg.load_params()?, &policy)?;
            write_compare(&cfg.out, &runs, &report)?;
            println!("{}", serde_json_line(&report.checks)?);
        }
        Command::Sweep {
            checkpoint,
            episodes,
            v_max,
        } => {
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            if let Some(n) = episodes {
                cfg.train.episodes = n;
            }
            if let Some(v) = v_max {
                cfg.v_max_list = v;
            }
            cfg.scenario = ScenarioKind::Sweep;
            cfg.validate()?;
            let shared = cfg.checkpoint.as_ref().map(|_| policy_from(&cfg)).transpose()?;
            let out = cfg.out.clone();
            let (runs, rows) = run_vmax_sweep(&cfg, cfg.load_params()?, |level| match &shared {
                Some(p) => Ok(p.clone()),
                None => train_into(level, &out.join(format!("train_vmax_{}", level.env.ptc.v_max)))
                    .map_err(|e| preheat_core::Error::Config(format!("{e:#}"))),
            })?;
            write_sweep(&cfg.out, &runs, &rows)?;
            write_json(cfg.out.join("sweep.json"), &rows)?;
        }
    }
    Ok(())
}

fn serde_json_line<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string(v)?)
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
