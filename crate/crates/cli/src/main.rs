//! `plapflow`: config-driven p-Laplacian flow experiments.
//!
//! Exit codes: 0 pass, 1 error or failed verdict, 2 pass with warnings.

// `!(x > 0)` style guards are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands::Outcome;
use crate::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "plapflow", version, about = "Discrete p-Laplacian flow experiments on truncated lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Override a config key, e.g. `--set flow.p=3` or `--set initial_data.scales=[1,10]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; defaults to the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let cfg = ExperimentConfig::load(&self.config, &self.overrides)?;
        let out = self.out.clone().unwrap_or_else(|| cfg.output.clone());
        Ok((cfg, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow for every amplitude scale and write `trace_<scale>.csv`.
    Evolve(Common),
    /// Run the configured inequality suites and write one report CSV each.
    Verify(Common),
    /// Fit decay laws on trace files and write decay reports.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Trace files written by `evolve`.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
    /// Write the lattice ball as text (`graph.txt`, or stdout with `--stdout`).
    GraphDump {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        stdout: bool,
    },
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("PLAPFLOW_THREADS") else { return Ok(()) };
    let n: usize =
        raw.trim().parse().with_context(|| format!("PLAPFLOW_THREADS must be a positive integer, got `{raw}`"))?;
    if n == 0 {
        bail!("PLAPFLOW_THREADS must be a positive integer, got 0");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome> {
    init_threads()?;
    match cli.command {
        Command::Evolve(common) => {
            let (cfg, out) = common.load()?;
            commands::cmd_evolve(&cfg, &out)
        }
        Command::Verify(common) => {
            let (cfg, out) = common.load()?;
            commands::cmd_verify(&cfg, &out)
        }
        Command::Analyze { common, traces } => {
            let (cfg, out) = common.load()?;
            commands::cmd_analyze(&cfg, &traces, &out)
        }
        Command::GraphDump { common, stdout } => {
            let (cfg, out) = common.load()?;
            commands::cmd_graph_dump(&cfg, (!stdout).then_some(out.as_path()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
