//! Command-line experiments for filter and smoother steady-state error regimes.
//!
//! Every command resolves its settings from defaults, then the `--figure`
//! preset, then the `--config` file, then explicit flags.

mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_montecarlo, cmd_oracle, cmd_predict, cmd_run, Outcome, MONTECARLO_HEADER, RUN_HEADER, VALUE_TOLERANCE,
};
pub use config::{parse_config, read_config, ExperimentConfig, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] smoothtype_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(_) | CliError::Io(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "smoothtype", version, about = "Filter and smoother steady-state error experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form steady-state regimes for filter and smoother
    Predict(ExperimentArgs),
    /// Simulate, filter, smooth, write CSV and check the verdicts
    Run(ExperimentArgs),
    /// Per-node error mean and variance over seeded paths
    Montecarlo(ExperimentArgs),
    /// Compare the sweep smoother with the boundary-value solver
    Oracle {
        #[command(flatten)]
        args: ExperimentArgs,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// Figure preset (1, 2 or 3)
    #[arg(long)]
    pub figure: Option<u8>,
    /// key = value settings file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model order
    #[arg(long)]
    pub n: Option<usize>,
    /// Drift power
    #[arg(long)]
    pub m: Option<u32>,
    /// Drift amplitude
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Horizon; defaults to 40 slowest closed-loop time constants
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Noise seed; absent means noiseless
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo path count
    #[arg(long)]
    pub paths: Option<usize>,
    /// CSV output path
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub seed_stride: Option<u64>,
}

impl ExperimentArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match self.figure {
            Some(f) => ExperimentConfig::preset(f)?,
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.config {
            cfg.apply(&read_config(path)?);
        }
        cfg.apply(&Overrides {
            n: self.n,
            m: self.m,
            a: self.a,
            sigma: self.sigma,
            rho: self.rho,
            t_end: self.t_end,
            dt: self.dt,
            seed: self.seed,
            paths: self.paths,
            output: self.output.clone(),
        });
        if let Some(stride) = self.seed_stride {
            cfg.seed_stride = stride;
        }
        Ok(cfg)
    }
}

pub fn execute(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Predict(args) => cmd_predict(&args.resolve()?),
        Command::Run(args) => cmd_run(&args.resolve()?),
        Command::Montecarlo(args) => cmd_montecarlo(&args.resolve()?),
        Command::Oracle { args, tolerance } => cmd_oracle(&args.resolve()?, *tolerance),
    }
}

/// Parses `args`, runs the command, prints the report and returns the exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(outcome) => {
            let _ = write!(out, "{}", outcome.report);
            outcome.code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
