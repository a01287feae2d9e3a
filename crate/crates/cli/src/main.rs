//! `scarlab`: batch driver for solves, level statistics, sweeps, subspectra
//! and density-of-states maps.
//!
//! Exit status: 0 on success, 1 when an estimator failed, 2 on solver or
//! configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use scarlab_core::stats::EnsembleKind;
use scarlab_core::Error as CoreError;

use scarlab_cli::commands::{self, EstimatorFailure};
use scarlab_cli::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "scarlab", version, about = "Quantum scars in disordered 2D wells")]
struct Cli {
    /// Run configuration (TOML), or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(long, global = true, default_value = "scarlab-out")]
    out_dir: PathBuf,
    /// Parallel sweep jobs.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Replaces the bump seed and the sweep seed list.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Poisson,
    Goe,
    Gue,
}

impl From<Kind> for EnsembleKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Poisson => Self::Poisson,
            Kind::Goe => Self::Goe,
            Kind::Gue => Self::Gue,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Solve the configured well; writes the spectrum and eigenstate container.
    Solve,
    /// Level statistics (q, Q, alpha) of one or more spectrum files.
    Stats {
        #[arg(required = true)]
        spectra: Vec<PathBuf>,
    },
    /// One solve plus statistics per (M, sigma, B, seed) tuple.
    Sweep,
    /// Expansion of one eigenstate in the unperturbed basis.
    Subspec {
        container: PathBuf,
        #[arg(long)]
        state: usize,
        /// Solved M = 0 container; required unless n = 2.
        #[arg(long)]
        basis: Option<PathBuf>,
    },
    /// Fock-Darwin density-of-states map over (B, E).
    Dos,
    /// Synthetic reference spectra.
    Synth {
        #[arg(value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 4000)]
        levels: usize,
        /// Defaults to the configured seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    #[command(hide = true)]
    Job,
}

fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<EstimatorFailure>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::FitFailure { .. }
                | CoreError::WindowTooShort { .. }
                | CoreError::DegenerateData
                | CoreError::SeriesTooShort { .. }
                | CoreError::SeriesDegenerate
                | CoreError::IncompleteExpansion { .. } => 1,
                _ => 2,
            };
        }
    }
    2
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.apply_seed_override(s);
        cfg.validate()?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli.config.as_deref(), cli.seed_override)?;
    let out = cli.out_dir.as_path();
    match &cli.command {
        Cmd::Solve => commands::solve(&cfg, out),
        Cmd::Stats { spectra } => commands::stats(&cfg, out, spectra),
        Cmd::Sweep => commands::sweep(&cfg, out, cli.workers),
        Cmd::Subspec { container, state, basis } => commands::subspec(&cfg, out, container, *state, basis.as_deref()),
        Cmd::Dos => commands::dos(&cfg, out),
        Cmd::Synth { kind, levels, seeds } => commands::synth(&cfg, out, (*kind).into(), *levels, seeds),
        Cmd::Job => commands::job(&cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
