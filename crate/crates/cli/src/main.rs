//! `engage`: command-line entry point for the engagement toolkit.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Bad flags, values or config entries. Exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

/// Failures of a subcommand.
#[derive(Debug)]
pub enum CliError {
    Usage(UsageError),
    Data(engage_core::Error),
}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        Self::Usage(e)
    }
}

impl From<engage_core::Error> for CliError {
    fn from(e: engage_core::Error) -> Self {
        Self::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.into())
    }
}

#[derive(Parser, Debug)]
#[command(name = "engage", version, about = "Telemetry-driven viewer engagement toolkit")]
pub struct Cli {
    /// Key = value configuration file; environment `ENGAGE_*` and flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output on standard error (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic data directory with planted ground truth
    Synth(SynthArgs),
    /// Label every streamer event of a data directory
    Label(LabelArgs),
    /// Train a network on a labels file
    Train(TrainArgs),
    /// Cross-validate on a labels file
    Eval(EvalArgs),
    /// Cross-validate every alpha x epsilon cell and select the best
    Grid(GridArgs),
    /// Discover play styles from a data directory
    Cluster(ClusterArgs),
    /// Per-second engagement line of one match
    Line(LineArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<String>,
    /// Number of streamers
    #[arg(long)]
    pub streamers: Option<String>,
    /// Matches per streamer
    #[arg(long)]
    pub matches: Option<String>,
    /// Noob, Explorer and Pro probabilities, e.g. `0.5,0.3,0.2` or `1/3,1/3,1/3`
    #[arg(long)]
    pub style_mix: Option<String>,
    #[arg(long)]
    pub inverse_gain: Option<String>,
    /// Chat messages per second in calm play
    #[arg(long)]
    pub base_chat_rate: Option<String>,
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    /// Data directory with manifests/, chat/ and telemetry/
    #[arg(long)]
    pub data: PathBuf,
    /// Output labels file (JSON lines)
    #[arg(long)]
    pub out: PathBuf,
    /// Feature catalog document; the built-in catalog when omitted
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainFlags {
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub dropout: Option<String>,
    #[arg(long)]
    pub hidden_units: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Labels file written by `label`
    #[arg(long)]
    pub labels: PathBuf,
    /// Output model document
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub labels: PathBuf,
    /// Output report document
    #[arg(long)]
    pub out: PathBuf,
    /// kfold or loso
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub folds: Option<String>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub folds: Option<String>,
    /// Train each cell for `fast_epochs` epochs instead of `epochs`
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fast: Option<String>,
    #[arg(long)]
    pub fast_epochs: Option<String>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output style report document
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of per-cluster mean normalized features
    #[arg(long)]
    pub means_csv: Option<PathBuf>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub kmin: Option<String>,
    #[arg(long)]
    pub kmax: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
}

#[derive(Args, Debug)]
pub struct LineArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Telemetry file containing the match
    #[arg(long)]
    pub telemetry: PathBuf,
    #[arg(long = "match")]
    pub match_id: String,
    /// CSV output
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// JSON output
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Manifest giving the match duration; the last event time otherwise
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Streamer id; the match's most frequent actor when omitted
    #[arg(long)]
    pub streamer: Option<String>,
    /// Moving-average window in seconds
    #[arg(long)]
    pub window: Option<String>,
}

/// Parses `argv` and runs the subcommand, returning the process exit code.
pub fn dispatch<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    match commands::run(&cli) {
        Ok(()) => 0,
        Err(CliError::Usage(UsageError(msg))) => {
            eprintln!("error: {msg}");
            eprintln!("run `engage --help` for usage");
            1
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(dispatch(std::env::args_os()))
}
