//! `voi`: value-of-information frontiers, information estimates and
//! forecasting backtests from the command line.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use voi::models::ModelKind;

use crate::config::{Units, UsizeList};
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "voi",
    version,
    about = "Value of information for mean-square forecasting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate U(I), V(I) and RMSE(I) on an information grid.
    Frontier(FrontierArgs),
    /// Gaussian mutual information between lagged returns and the next target return.
    Mi(MiArgs),
    /// Autocorrelation of a symbol's log-returns.
    Acf(AcfArgs),
    /// Rolling-window sweep over symbols, lags and models.
    Backtest(BacktestArgs),
    /// Partition (Hartley) value of information next to the Shannon frontier.
    Hartley(HartleyArgs),
    /// Write a seeded synthetic price panel.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OutputDir {
    /// Directory for outputs [default: voi-out].
    #[arg(long, env = "VOI_OUTPUT_DIR")]
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FrontierArgs {
    /// Standard deviation of a Gaussian response.
    #[arg(
        long,
        required_unless_present = "entropy",
        conflicts_with = "entropy",
        allow_negative_numbers = true
    )]
    pub sigma: Option<f64>,
    /// Differential entropy of the response, in nats.
    #[arg(long, allow_negative_numbers = true)]
    pub entropy: Option<f64>,
    /// Information grid in nats: `start:stop:step` (stop included) or a comma list.
    #[arg(long, default_value = "0:3:0.25")]
    pub grid: String,
    #[arg(long, value_enum, default_value_t = Units::Bits)]
    pub units: Units,
    /// Output CSV [default: <output-dir>/frontier.csv].
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub dir: OutputDir,
}

/// Data selection shared by `mi`, `acf` and `backtest`.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Price CSV with header `date,symbol,close`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Symbol whose next return is predicted [default: BTC/USD].
    #[arg(long)]
    pub target: Option<String>,
    /// Comma-separated inclusion order, target first.
    #[arg(long, value_delimiter = ',')]
    pub symbols: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub units: Option<Units>,
    #[command(flatten)]
    pub dir: OutputDir,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Numbers of symbols, e.g. `1..5` or `1,3` [default: 1..5].
    #[arg(short = 'm', long = "m-range")]
    pub m_range: Option<UsizeList>,
    /// Numbers of lags, e.g. `2..20` [default: 2..20].
    #[arg(short = 'n', long = "n-range")]
    pub n_range: Option<UsizeList>,
    #[arg(long)]
    pub train_len: Option<usize>,
    #[arg(long)]
    pub test_len: Option<usize>,
    #[arg(long)]
    pub step: Option<usize>,
    /// Covariance shrinkage toward a scaled identity [default: 0.01].
    #[arg(long)]
    pub shrinkage: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct MiArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Output JSON [default: <output-dir>/mi.json].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct AcfArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Symbol to analyse [default: the target].
    #[arg(long)]
    pub symbol: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub max_lag: usize,
    /// Output CSV [default: <output-dir>/acf.csv].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Comma-separated models among LM, PLS, NN [default: all].
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,
    #[arg(long)]
    pub pls_components: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub hidden_units: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Master seed for per-split NN seeds [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Store every split's fitted values and predictions in the report.
    #[arg(long)]
    pub keep_predictions: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct HartleyArgs {
    /// Partition sizes.
    #[arg(long, default_value = "1,2,4,8")]
    pub k: UsizeList,
    /// Use a symbol's log-returns from this CSV instead of a Gaussian sample.
    #[arg(long, requires = "symbol")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub symbol: Option<String>,
    /// Size of the Gaussian sample.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Standard deviation of the Gaussian sample.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Units::Bits)]
    pub units: Units,
    /// Output CSV [default: <output-dir>/hartley.csv].
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub dir: OutputDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKindArg {
    GaussianChannel,
    Ar1Panel,
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    /// JSON synthetic spec; flags override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<SynthKindArg>,
    /// Number of AR(1) symbols.
    #[arg(long)]
    pub symbols: Option<usize>,
    /// Number of predictor symbols of the Gaussian channel.
    #[arg(long)]
    pub predictors: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub innovation_corr: Option<f64>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    /// Price rows per symbol.
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated symbol names, target first.
    #[arg(long, value_delimiter = ',')]
    pub names: Option<Vec<String>>,
    /// Output CSV [default: <output-dir>/synth.csv].
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub dir: OutputDir,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let written = match cli.command {
        Command::Frontier(a) => commands::frontier(a)?,
        Command::Mi(a) => commands::mi(a)?,
        Command::Acf(a) => commands::acf(a)?,
        Command::Backtest(a) => commands::backtest(a)?,
        Command::Hartley(a) => commands::hartley(a)?,
        Command::Synth(a) => commands::synth(a)?,
    };
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
