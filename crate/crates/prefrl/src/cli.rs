//! Argument parsing and dispatch.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{self, Command, Context};
use crate::config::RunConfig;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "prefrl", version, about = "Reward modeling, PPO, and best-of-N on synthetic tasks")]
pub struct Cli {
    /// Config file of `section.key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `section.key=value` override; repeatable, applied in order.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Root directory that relative paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Sub {
    /// Generate synthetic tasks and the SFT warm-start policy.
    GenTasks,
    /// Sample candidates and judge them into preference pairs.
    BuildPrefs,
    /// Train the reward model with the Bradley-Terry loss.
    TrainRm,
    /// Pairwise accuracy of the reward model on the benchmark split.
    EvalRm,
    /// PPO against the reward model.
    TrainPpo,
    /// Sample one response per prompt.
    Sample,
    /// Best-of-N selection with the reward model.
    Bon {
        /// Overrides `bon.n`.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Score a corpus and flag low-reward samples.
    CleanData,
    /// Padded-score delta of the reward model.
    ProbeLength,
    /// Print the effective configuration.
    ShowConfig,
}

impl Cli {
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        for a in &self.set {
            cfg.apply_override(a)?;
        }
        if let Sub::Bon { n: Some(n) } = self.command {
            cfg.bon.n = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs a parsed command line and returns its one-line summary.
pub fn execute(cli: &Cli) -> Result<String> {
    let cfg = cli.config()?;
    let cmd = match cli.command {
        Sub::GenTasks => Command::GenTasks,
        Sub::BuildPrefs => Command::BuildPrefs,
        Sub::TrainRm => Command::TrainRm,
        Sub::EvalRm => Command::EvalRm,
        Sub::TrainPpo => Command::TrainPpo,
        Sub::Sample => Command::Sample,
        Sub::Bon { .. } => Command::Bon,
        Sub::CleanData => Command::CleanData,
        Sub::ProbeLength => Command::ProbeLength,
        Sub::ShowConfig => return Ok(cfg.serialize().trim_end().to_string()),
    };
    commands::run(cmd, &Context::new(cfg, &cli.out)?)
}
