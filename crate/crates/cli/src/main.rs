//! `distmon`: stream and instance generators, protocol runs and reduction
//! checks. Exit status is 0 on success, 1 when a check or input validation
//! fails and 2 on usage errors.

mod commands;
mod config;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use distmon_core::{Constants, EstimatorMode};

#[derive(Parser, Debug)]
#[command(
    name = "distmon",
    version,
    about = "Continuous distributed F_p monitoring simulator"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// key=value file whose entries act as flags of the subcommand; explicit flags win.
    /// Consumed before parsing; declared so that it shows up in help.
    #[arg(long, global = true, value_name = "FILE")]
    #[allow(dead_code)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate an event stream.
    GenStream(GenStreamArgs),
    /// Generate a structured hard instance.
    GenHard(GenHardArgs),
    /// Run one threshold instance over a stream and write its trace.
    RunThreshold(RunThresholdArgs),
    /// Run the threshold ladder over a stream and write its trace.
    RunMonitor(RunMonitorArgs),
    /// Check one of the reduction estimators by Monte-Carlo.
    VerifyReduction(VerifyArgs),
    /// Communication of a non-firing threshold run for several site counts.
    BenchComm(BenchCommArgs),
    /// Validate a stream file or an instance file.
    Validate(ValidateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamKind {
    Uniform,
    Zipf,
    Btx,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum HardKind {
    Disj,
    Bitdisj,
    Btx,
    Gapmaj,
    Quantile,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Btx,
    F0bit,
    Embed,
    Quantile,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    Incremental,
    Literal,
}

impl From<Estimator> for EstimatorMode {
    fn from(e: Estimator) -> Self {
        match e {
            Estimator::Incremental => EstimatorMode::Incremental,
            Estimator::Literal => EstimatorMode::Literal,
        }
    }
}

#[derive(Args, Debug)]
pub struct GenStreamArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    pub kind: StreamKind,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 4096)]
    pub m: usize,
    #[arg(long, default_value_t = 20_000)]
    pub len: u64,
    /// Zipf exponent.
    #[arg(long, default_value_t = 1.1)]
    pub s: f64,
    /// Moment order of the BTX instance (btx only).
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// BTX block count is round(1/eps^2) (btx only).
    #[arg(long, default_value_t = 0.25)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenHardArgs {
    #[arg(long, value_enum)]
    pub kind: HardKind,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Universe size for disj/bitdisj, 3 mod 4.
    #[arg(long, default_value_t = 39)]
    pub nprime: usize,
    #[arg(long, default_value_t = 0.25)]
    pub beta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0.25)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Protocol constants; see `Constants` in the core crate.
#[derive(Args, Debug, Clone)]
pub struct ConstArgs {
    #[arg(long, default_value_t = Constants::default().c_gamma)]
    pub c_gamma: f64,
    #[arg(long, default_value_t = Constants::default().c_b)]
    pub c_b: f64,
    #[arg(long, default_value_t = Constants::default().b_floor)]
    pub b_floor: f64,
    #[arg(long, default_value_t = Constants::default().c_r)]
    pub c_r: f64,
    #[arg(long, default_value_t = Constants::default().c_diag)]
    pub c_diag: f64,
    /// Fire once the estimate exceeds (1 - fire_fraction * eps) tau.
    #[arg(long, default_value_t = Constants::default().fire_fraction)]
    pub fire_fraction: f64,
}

impl ConstArgs {
    pub fn constants(&self) -> Constants {
        Constants {
            c_gamma: self.c_gamma,
            c_b: self.c_b,
            b_floor: self.b_floor,
            c_r: self.c_r,
            c_diag: self.c_diag,
            fire_fraction: self.fire_fraction,
        }
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Stream file (`m k n` header, then `t site j` lines).
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0.2)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stream-length bound; the stream header's value when absent.
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long, value_enum, default_value = "incremental")]
    pub estimator: Estimator,
    /// Keep every stride-th trace row (the last row is always kept).
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[command(flatten)]
    pub constants: ConstArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RunThresholdArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub tau: f64,
}

#[derive(Args, Debug)]
pub struct RunMonitorArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Copies per rung (odd); derived from c-a when absent.
    #[arg(long)]
    pub amplification: Option<usize>,
    /// Highest rung; derived from n when absent.
    #[arg(long)]
    pub ladder_top: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub c_a: f64,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub which: Reduction,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub nprime: Option<usize>,
    /// Embedding dimension (embed only).
    #[arg(long)]
    pub r: Option<usize>,
    /// Length of the embedded vector (embed only).
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional per-trial CSV.
    #[arg(long)]
    pub per_trial: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchCommArgs {
    /// Comma-separated site counts; a later occurrence replaces an earlier one.
    #[arg(long, value_delimiter = ',', action = clap::ArgAction::Set, default_values_t = [4usize, 8, 16])]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0.25)]
    pub eps: f64,
    #[arg(long, default_value_t = 3)]
    pub trials: u64,
    #[arg(long, default_value_t = 4096)]
    pub m: usize,
    #[arg(long, default_value_t = 20_000)]
    pub len: u64,
    /// tau is this multiple of the trial stream's final F_p, so no run fires.
    #[arg(long, default_value_t = 2.0)]
    pub tau_factor: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub constants: ConstArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct ValidateArgs {
    #[arg(long)]
    pub stream: Option<PathBuf>,
    #[arg(long)]
    pub instance: Option<PathBuf>,
}

/// Failures that map to exit status 1.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<distmon_core::Error>() {
        Some(distmon_core::Error::InvalidParameter { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
