use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};

use safetrack_cli::{run_all, run_stage, Ctx, ExperimentConfig, Stage};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Plan,
    Brs,
    Train,
    Rollout,
    Certify,
    Report,
    All,
}

/// Plan a nominal trajectory, compute its backward reachable sets, train
/// per-step tracking networks, and certify them from sampled rollouts.
#[derive(Debug, Parser)]
#[command(name = "safetrack", version)]
struct Args {
    /// Stage to run; each reads the outputs of the ones before it.
    command: Command,
    /// TOML experiment file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for training and rollouts (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Enlargement of the initial set for rollout starts.
    #[arg(long)]
    sigma: Option<f64>,
    /// Miscoverage level of the certificate.
    #[arg(long)]
    delta: Option<f64>,
}

fn run(args: Args) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = args.out {
        cfg.out = o;
    }
    if let Some(s) = args.sigma {
        cfg.rollout.sigma = s;
    }
    if let Some(d) = args.delta {
        cfg.certify.delta = d;
    }
    if let Some(w) = args.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let ctx = Ctx::new(cfg)?;
    let stage = match args.command {
        Command::Plan => Stage::Plan,
        Command::Brs => Stage::Brs,
        Command::Train => Stage::Train,
        Command::Rollout => Stage::Rollout,
        Command::Certify => Stage::Certify,
        Command::Report => Stage::Report,
        Command::All => {
            for line in run_all(&ctx)? {
                println!("{}", line.trim_end());
            }
            return Ok(());
        }
    };
    println!("{}", run_stage(&ctx, stage)?.trim_end());
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
