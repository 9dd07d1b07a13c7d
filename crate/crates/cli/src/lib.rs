//! Command-line driver: 1D fitting, synthetic AR data, temporal training,
//! forecasting, evaluation and the theory checks.
//!
//! Exit status: 0 ok, 2 usage or input error, 3 numeric divergence,
//! 4 property-check failure.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod manifest;
pub mod parse;
pub mod series;
pub mod train1d;
pub mod verify;

pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_PROPERTY: i32 = 4;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ISL_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "isl", version, about = "Invariant statistical loss experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Fit a 1D generator to samples of an analytic target.
    Train1d(train1d::Train1dArgs),
    /// Write synthetic AR(p) series as CSV.
    SynthAr(series::SynthArArgs),
    /// Train an RNN-conditioned generator on series from a CSV file.
    TrainTs(series::TrainTsArgs),
    /// Forecast from a temporal checkpoint.
    Forecast(series::ForecastArgs),
    /// Recompute metrics from stored artifacts.
    Eval(eval::EvalArgs),
    /// Run the rank-statistic property checks.
    Verify(verify::VerifyArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the replay (defaults to the recorded one).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Marks a failed property check (exit status 4).
#[derive(Debug)]
pub struct PropertyFailure(pub String);

impl std::fmt::Display for PropertyFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "property check failed: {}", self.0)
    }
}

impl std::error::Error for PropertyFailure {}

/// Marks a missing or unreadable input (exit status 2).
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<PropertyFailure>() {
            return EXIT_PROPERTY;
        }
        if let Some(e) = cause.downcast_ref::<isl::IslError>() {
            return match e {
                isl::IslError::Diverged { .. } | isl::IslError::NonFinite { .. } => EXIT_DIVERGED,
                _ => EXIT_USAGE,
            };
        }
    }
    EXIT_USAGE
}

/// Resolves `--out`, falling back to `$ISL_OUT_DIR/<command>` and then
/// `isl-out/<command>`.
pub fn resolve_out(out: &Option<PathBuf>, command: &str) -> PathBuf {
    match out {
        Some(p) => p.clone(),
        None => std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("isl-out"))
            .join(command),
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train1d(a) => train1d::run(a),
        Command::SynthAr(a) => series::run_synth_ar(a),
        Command::TrainTs(a) => series::run_train_ts(a),
        Command::Forecast(a) => series::run_forecast(a),
        Command::Eval(a) => eval::run(a),
        Command::Verify(a) => verify::run(a),
        Command::Replay(a) => replay(a),
    }
}

fn replay(args: ReplayArgs) -> Result<()> {
    let m = RunManifest::read(&args.manifest)?;
    let mut cmd = m.command;
    if let Some(out) = args.out {
        match &mut cmd {
            Command::Train1d(a) => a.out = Some(out),
            Command::SynthAr(a) => a.out = Some(out),
            Command::TrainTs(a) => a.out = Some(out),
            Command::Forecast(a) => a.out = Some(out),
            Command::Eval(a) => a.out = Some(out),
            Command::Verify(a) => a.out = Some(out),
            Command::Replay(_) => anyhow::bail!("a manifest cannot record a replay"),
        }
    }
    run(cmd)
}

/// Parses `args` (including the program name), runs, and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match config::merge_config_file(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
