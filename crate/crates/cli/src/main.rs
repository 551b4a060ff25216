//! `depin`: experiment runner for the depinning toolkit.
//!
//! Every subcommand reads a flat `key = value` config and writes CSV result
//! rows. Samples are independent tasks keyed by `(l, param, sample)`;
//! `--resume` skips the ones already present in the output file.
//!
//! Environment overrides: `DEPIN_SEED` replaces the `seed` key and
//! `DEPIN_WORKERS` the `workers` key (flags win over both).

mod config;
mod experiments;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::Config;
use experiments::{Criterion, MixingCheck, Percolation, RenormCheck, Simulate, SoftCheck};
use run::{Experiment, RunOptions, Status};

#[derive(Parser)]
#[command(name = "depin", version, about = "Interface depinning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Velocity of the flat surface on a periodic window.
    Simulate(RunArgs),
    /// Blocking probabilities in criterion boxes and their decay fits.
    Criterion(RunArgs),
    /// Strip-crossing curves and the oriented percolation threshold.
    Percolation(RunArgs),
    /// Renormalization constraints, scale sequences and the recursion.
    RenormCheck(RunArgs),
    /// Exponential-moment condition and soft-model blocking decay.
    SoftCheck(RunArgs),
    /// Covariance decay of box functionals of the environment.
    MixingCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file; all keys take defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV; stdout when neither this nor the `out` key is given.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Keep samples already in the output and compute only the missing ones.
    #[arg(long)]
    resume: bool,
    /// Compute at most this many new samples, then stop without aggregates.
    #[arg(long)]
    max_samples: Option<u64>,
}

fn main() -> ExitCode {
    match try_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn try_main() -> Result<()> {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Criterion(a) => ("criterion", a),
        Command::Percolation(a) => ("percolation", a),
        Command::RenormCheck(a) => ("renorm-check", a),
        Command::SoftCheck(a) => ("soft-check", a),
        Command::MixingCheck(a) => ("mixing-check", a),
    };
    let mut cfg = match &args.config {
        Some(p) => Config::parse(&std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?)?,
        None => Config::default(),
    };
    cfg.apply_env()?;
    let experiment: Box<dyn Experiment> = match name {
        "simulate" => Box::new(Simulate::from_config(&cfg)?),
        "criterion" => Box::new(Criterion::from_config(&cfg)?),
        "percolation" => Box::new(Percolation::from_config(&cfg)?),
        "renorm-check" => Box::new(RenormCheck::from_config(&cfg)?),
        "soft-check" => Box::new(SoftCheck::from_config(&cfg)?),
        _ => Box::new(MixingCheck::from_config(&cfg)?),
    };
    let hash = cfg.hash(name);
    let workers = match args.workers {
        Some(w) => w,
        None => cfg.get_or("workers", 0)?,
    };
    let out = args.out.clone().or_else(|| cfg.raw("out").map(PathBuf::from));
    let opts = RunOptions {
        workers,
        max_new: args.max_samples,
    };
    let (writer, existing) = match (&out, args.resume) {
        (Some(p), true) => output::resume_writer(p, &hash)?,
        (Some(p), false) => (output::create_writer(p, &hash)?, Default::default()),
        (None, true) => bail!("--resume needs an output file"),
        (None, false) => (output::stdout_writer(&hash)?, Default::default()),
    };
    match run::execute(experiment.as_ref(), writer, existing, opts)? {
        Status::Complete => {}
        Status::AlreadyComplete => eprintln!("{name} {hash}: already complete"),
        Status::Partial { remaining } => eprintln!("{name} {hash}: stopped with {remaining} samples left"),
    }
    Ok(())
}
