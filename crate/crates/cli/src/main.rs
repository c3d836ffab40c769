//! `doss <mode> --config <path> [--out <dir>] [--seed N] [--workers N]`
//!
//! Exit codes: 0 success, 1 a check failed or an unexpected error, 2 invalid
//! configuration, 3 too many failed paths.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::Mode;
use run::Invalid;

#[derive(Debug, Parser)]
#[command(name = "doss", version, about = "Monte Carlo propagation with complex-scaled Brownian paths")]
struct Cli {
    #[arg(value_enum)]
    mode: ModeArg,
    /// TOML run configuration, or a manifest from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "doss-out")]
    out: PathBuf,
    /// Overrides `mc.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to `mc.workers`, then the available parallelism.
    #[arg(long, env = "DOSS_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Propagate,
    Ufunctional,
    CheckAssumptions,
    Validate,
    Convergence,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Propagate => Mode::Propagate,
            ModeArg::Ufunctional => Mode::Ufunctional,
            ModeArg::CheckAssumptions => Mode::CheckAssumptions,
            ModeArg::Validate => Mode::Validate,
            ModeArg::Convergence => Mode::Convergence,
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Invalid>().is_some() {
        return 2;
    }
    match e.downcast_ref::<doss_core::Error>() {
        Some(doss_core::Error::ThresholdExceeded(_)) => 3,
        Some(doss_core::Error::Config(_) | doss_core::Error::Precondition(_) | doss_core::Error::SingularPoint { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match try_main(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("doss: run finished but at least one check failed; see manifest.toml");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("doss: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn try_main(cli: Cli) -> anyhow::Result<bool> {
    let mut config = config::load(&cli.config).map_err(|e| Invalid(format!("{e:#}")))?;
    if let Some(seed) = cli.seed {
        config.mc.seed = seed;
    }
    let workers = cli
        .workers
        .or(config.mc.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Invalid("workers must be at least 1".into()).into());
    }
    let plan = run::prepare(cli.mode.into(), config)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    pool.install(|| run::execute(&plan, &cli.out, workers))
}
