//! `volcal` command line: synth, calibrate, check and kernels.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use volcal::calibrate::Method;
use volcal::pipeline::Smoothing;
use volcal::VolcalError;

use commands::Status;
use config::{Overrides, RunConfig};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_CONDITION: u8 = 3;
pub const EXIT_NONCONVERGENCE: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "volcal",
    version,
    about = "Recover a time-linear local-volatility perturbation from two expiries"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate quotes from a known perturbation with the Dupire solver.
    Synth(Flags),
    /// Recover (f0*, f1*) from a quote file.
    Calibrate(Flags),
    /// Evaluate the uniqueness condition; exit 0 iff it holds.
    Check(Flags),
    /// Dump K0, K1 tables for each configured tau.
    Kernels(Flags),
}

#[derive(Debug, Args)]
pub struct Flags {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<Method>,
    /// Smoothing parameter: a number ≥ 0 or "gcv".
    #[arg(long)]
    pub lambda: Option<Smoothing>,
    /// Half-width of the data interval in log-moneyness.
    #[arg(long)]
    pub b: Option<f64>,
    /// Half-width of the computational domain.
    #[arg(long = "B")]
    pub half_width: Option<f64>,
    /// Grid intervals on [0, b].
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Solve even when the uniqueness condition fails.
    #[arg(long)]
    pub force: bool,
    /// Quote file (.csv or .json) for calibrate.
    #[arg(long)]
    pub quotes: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Flags {
    pub fn resolve(&self) -> volcal::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            method: self.method,
            lambda: self.lambda,
            b: self.b,
            half_width: self.half_width,
            grid_n: self.grid_n,
            tol: self.tol,
            force: self.force,
            quotes: self.quotes.clone(),
            out: self.out.clone(),
        });
        Ok(cfg)
    }
}

pub fn exit_code(err: &VolcalError) -> u8 {
    match err {
        VolcalError::ContractionViolated(_) => EXIT_CONDITION,
        VolcalError::NonConvergence { .. } | VolcalError::OracleFailure(_) => EXIT_NONCONVERGENCE,
        _ => EXIT_VALIDATION,
    }
}

/// Caps the global rayon pool at `VOLCAL_THREADS` when set.
pub fn configure_threads() -> volcal::Result<()> {
    let Ok(value) = std::env::var("VOLCAL_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| VolcalError::Config(format!("VOLCAL_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| VolcalError::Config(format!("cannot size the thread pool: {e}")))
}

/// Runs one command and returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    let result = configure_threads().and_then(|()| match &cli.command {
        Cmd::Synth(f) => f.resolve().and_then(|c| commands::synth(&c)),
        Cmd::Calibrate(f) => f.resolve().and_then(|c| commands::calibrate_cmd(&c)),
        Cmd::Check(f) => f.resolve().and_then(|c| commands::check(&c)),
        Cmd::Kernels(f) => f.resolve().and_then(|c| commands::kernels(&c)),
    });
    match result {
        Ok(Status::Success) => 0,
        Ok(Status::ConditionFailed) => EXIT_CONDITION,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
