//! `bitforge`: generate data, train the float baseline, search bitwidth
//! policies, apply them and report on runs.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use bitforge::search::{Objective, Optimizer, RewardMode};
use clap::{Args, Parser, Subcommand};

use commands::Status;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "bitforge", version, about = "Hardware-aware mixed-precision quantization search")]
struct Cli {
    /// Root for default run directories.
    #[arg(long, global = true, env = "BITFORGE_RUN_DIR", default_value = "runs")]
    run_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// latency | energy | size | bitops
    #[arg(long)]
    objective: Option<Objective>,
    /// `<float><unit>` (e.g. 2.5ms, 3mJ, 40KiB, 12M) or `<float>x` relative
    /// to the all-8-bit policy.
    #[arg(long)]
    limit: Option<String>,
    /// edge | cloud | spatial | <path to hardware JSON>
    #[arg(long)]
    hw: Option<String>,
    /// ddpg | random | evolutionary
    #[arg(long)]
    optimizer: Option<Optimizer>,
    #[arg(long)]
    episodes: Option<usize>,
    /// constrained | accuracy-guaranteed
    #[arg(long)]
    reward: Option<RewardMode>,
    /// Bootstrap DDPG targets from the online networks instead of the
    /// slow-moving target copies.
    #[arg(long)]
    online_targets: bool,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = self.objective {
            cfg.objective = o;
        }
        if let Some(l) = &self.limit {
            cfg.limit = l.clone();
        }
        if let Some(h) = &self.hw {
            cfg.hw = h.clone();
            cfg.hardware = None;
        }
        if let Some(o) = self.optimizer {
            cfg.search.optimizer = o;
        }
        if let Some(e) = self.episodes {
            cfg.search.episodes = e;
        }
        if let Some(r) = self.reward {
            cfg.reward.mode = r;
        }
        if self.online_targets {
            cfg.search.agent.online_targets = true;
        }
        cfg.resolve()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the float baseline and record its accuracy.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Model JSON to start from (default: the built-in desk network).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search a bitwidth policy under a resource budget.
    Search {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quantize the baseline with a policy and finetune it on the full set.
    Apply {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        policy: PathBuf,
        /// Finetune epochs (default from the config).
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise a run directory and write plot CSVs.
    Report { run: PathBuf },
    /// Re-execute the run recorded in a manifest.
    Rerun {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<Status> {
    let root = cli.run_dir;
    let or = |p: Option<PathBuf>, name: &str| p.unwrap_or_else(|| root.join(name));
    match cli.command {
        Command::GenData { common, out } => {
            let cfg = common.config()?;
            commands::gen_data(&cfg, &or(out, "data"))
        }
        Command::Baseline { common, data, model, out } => {
            let cfg = common.config()?;
            commands::baseline(&cfg, &or(data, "data"), model.as_deref(), &or(out, "baseline"))
        }
        Command::Search { common, data, baseline, out } => {
            let cfg = common.config()?;
            let name = format!(
                "search-{}-{}-{}-s{}",
                cfg.objective,
                cfg.hardware().name,
                cfg.search.optimizer,
                cfg.seed
            );
            commands::search_run(&cfg, &or(data, "data"), &or(baseline, "baseline"), &or(out, &name))
        }
        Command::Apply { common, data, baseline, policy, epochs, out } => {
            let mut cfg = common.config()?;
            if let Some(e) = epochs {
                cfg.apply_epochs = e;
            }
            let name = format!("apply-s{}", cfg.seed);
            commands::apply(&cfg, &or(data, "data"), &or(baseline, "baseline"), &policy, &or(out, &name))
        }
        Command::Report { run } => commands::report(&run).map(|_| Status::Ok),
        Command::Rerun { manifest, out } => commands::rerun(&manifest, &out),
    }
}

/// 2: bad configuration or inputs; 4: numeric divergence; 1: anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<bitforge::Error>() {
            return match e {
                bitforge::Error::Diverged(_) => 4,
                _ => 2,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Infeasible) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
