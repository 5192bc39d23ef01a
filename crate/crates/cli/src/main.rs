//! `metastate`: command-line front end for the metastate laboratory.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Compute(metastate_core::Error),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Compute(e) => write!(f, "computation failed: {e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<metastate_core::Error> for CliError {
    fn from(e: metastate_core::Error) -> Self {
        CliError::Compute(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "metastate", version, about = "Metastates of mean-field spin models in Markov random fields")]
struct Cli {
    /// JSON file with option values; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    global: config::Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stationary law, ergodicity, spectral gap and occupation-time covariance of a chain.
    Chain(ChainArgs),
    /// Free-energy minimizers, Hessian test and stability vectors.
    Minimize(MinimizeArgs),
    /// Potts order parameters, free-energy gap and coexistence curve.
    Potts(PottsArgs),
    /// Exact finite-volume law of the spin counts on a sampled disorder path.
    Gibbs(GibbsArgs),
    /// Gaussian (and optionally empirical) stability-region weights.
    Weights(WeightsArgs),
    /// Replica estimate of the degenerate-chain metastate.
    Simulate(SimulateArgs),
    /// End-to-end verification suites.
    Verify(VerifyArgs),
}

impl clap::Args for config::Global {
    fn augment_args(cmd: clap::Command) -> clap::Command {
        cmd.arg(
            clap::Arg::new("out")
                .long("out")
                .global(true)
                .value_parser(clap::value_parser!(PathBuf))
                .help("Output directory [default: out]"),
        )
        .arg(
            clap::Arg::new("threads")
                .long("threads")
                .global(true)
                .value_parser(clap::value_parser!(usize))
                .help("Worker threads [default: all cores]"),
        )
        .arg(
            clap::Arg::new("sequential")
                .long("sequential")
                .global(true)
                .action(clap::ArgAction::SetTrue)
                .help("Run replica loops on the calling thread"),
        )
    }

    fn augment_args_for_update(cmd: clap::Command) -> clap::Command {
        Self::augment_args(cmd)
    }
}

impl clap::FromArgMatches for config::Global {
    fn from_arg_matches(m: &clap::ArgMatches) -> Result<Self, clap::Error> {
        Ok(config::Global {
            out: m.get_one::<PathBuf>("out").cloned(),
            threads: m.get_one::<usize>("threads").copied(),
            sequential: m.get_flag("sequential").then_some(true),
        })
    }

    fn update_from_arg_matches(&mut self, m: &clap::ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Series,
    FundamentalMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorArg {
    Structural,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteArg {
    Theorem1,
    Theorem3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Potts,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ChainArgs {
    /// Named chain: degenerate:p, iid:uniform[:q] or doubly:a,b,c,d.
    #[arg(long)]
    pub preset: Option<String>,
    /// Chain as a JSON file path or inline JSON {"rows": [[..]]}.
    #[arg(long)]
    pub chain: Option<String>,
    /// Inline rows, e.g. "0.2,0.8;0.6,0.4".
    #[arg(long)]
    pub matrix: Option<String>,
    /// Also report the finite-n covariance at this volume.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Series truncation tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Eigenvalue threshold of the tangent rank.
    #[arg(long)]
    pub rank_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MinimizeArgs {
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub field: Option<f64>,
    #[arg(long)]
    pub q: Option<usize>,
    /// Disorder law as comma-separated weights; otherwise the chain's stationary law.
    #[arg(long)]
    pub pi: Option<String>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub chain: Option<String>,
    #[arg(long)]
    pub matrix: Option<String>,
    /// Starting points per simplex edge.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Free-energy slack for calling a minimizer global.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PottsArgs {
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub field: Option<f64>,
    #[arg(long)]
    pub q: Option<usize>,
    /// Inverse temperatures for the coexistence curve, comma-separated.
    #[arg(long)]
    pub betas: Option<String>,
    /// Field bracket "lo,hi" for the coexistence search.
    #[arg(long)]
    pub window: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GibbsArgs {
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub field: Option<f64>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub chain: Option<String>,
    #[arg(long)]
    pub matrix: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// 1-based start state or "stationary".
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Neighbourhood radius; defaults to 0.4 × the minimum distance between ordered states.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct WeightsArgs {
    #[arg(long)]
    pub beta: Option<f64>,
    /// Random-field strength; defaults to the coexistence field at `beta`.
    #[arg(long)]
    pub field: Option<f64>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub chain: Option<String>,
    #[arg(long)]
    pub matrix: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Volume of the empirical comparison (0 disables it).
    #[arg(long)]
    pub empirical_n: Option<usize>,
    #[arg(long)]
    pub empirical_replicas: Option<usize>,
    /// Points per axis of the region heatmap (0 disables it).
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Defaults to the coexistence field at `beta`.
    #[arg(long)]
    pub field: Option<f64>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub chain: Option<String>,
    #[arg(long)]
    pub matrix: Option<String>,
    /// 1-based start state or "stationary".
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Option<SuiteArg>,
    /// Reduced volumes and replica counts.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub quick: Option<bool>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let file = match &cli.config {
        Some(p) => config::read_file(p)?,
        None => Default::default(),
    };
    let global = config::resolve_global(&file, &cli.global)?;
    if let Some(t) = global.threads {
        metastate_core::exec::init_workers(t).map_err(CliError::Config)?;
    }
    match cli.command {
        Command::Chain(a) => commands::chain(&global, config::resolve(&commands::chain_defaults(), &file, &a)?),
        Command::Minimize(a) => {
            commands::minimize(&global, config::resolve(&commands::minimize_defaults(), &file, &a)?)
        }
        Command::Potts(a) => commands::potts(&global, config::resolve(&commands::potts_defaults(), &file, &a)?),
        Command::Gibbs(a) => commands::gibbs(&global, config::resolve(&commands::gibbs_defaults(), &file, &a)?),
        Command::Weights(a) => {
            commands::weights(&global, config::resolve(&commands::weights_defaults(), &file, &a)?)
        }
        Command::Simulate(a) => {
            commands::simulate(&global, config::resolve(&commands::simulate_defaults(), &file, &a)?)
        }
        Command::Verify(a) => commands::verify(&global, config::resolve(&commands::verify_defaults(), &file, &a)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("metastate: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
