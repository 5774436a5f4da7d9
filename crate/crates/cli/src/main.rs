//! `ookdim`: train, evaluate, search and audit dimmable OOK codebooks.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ookdim::baseline::CsiModel;
use ookdim::optics::DelayMode;

#[derive(Parser, Debug)]
#[command(name = "ookdim", version, about = "Learned dimmable OOK codebooks for visible light links")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Configuration file for the subcommand (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Exit with status 0 even when a feasibility audit fails.
    #[arg(long, global = true)]
    pub allow_infeasible: bool,
    /// How the reflected-path delay ratio enters the ISI channel.
    #[arg(long, global = true, value_parser = parse_delay_mode)]
    pub isi_delay_mode: Option<DelayMode>,
    /// Receiver CSI: perfect, none or perturbed:<variance>.
    #[arg(long, global = true, value_parser = parse_csi)]
    pub csi: Option<CsiModel>,
    /// Print the documented default configuration of the subcommand and exit.
    #[arg(long, global = true)]
    pub print_default_config: bool,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a transceiver and extract its codebooks.
    Train(TrainArgs),
    /// Monte Carlo symbol error rates of trained models and codebooks.
    Eval(EvalArgs),
    /// Search a (semi-)constant-weight codebook.
    Baseline(BaselineArgs),
    /// Print weight and distance statistics of a codebook.
    Audit(AuditArgs),
    /// Compare two evaluation CSV files.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Reuse the configuration snapshot of an earlier run.
    #[arg(long, conflicts_with = "config")]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Trained checkpoint (evaluated as system `dnn`).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Codebook files decoded by ML (system `baseline`); repeatable.
    #[arg(long)]
    pub codebook: Vec<PathBuf>,
    /// Also ML-decode the checkpoint's codebooks (system `ml-learned`).
    #[arg(long)]
    pub ml: bool,
    /// SNR grid in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub snr: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub d: Option<f64>,
    /// strict, relaxed or nonlinear.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub target: Option<usize>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// `linear` or `kingbright`.
    #[arg(long)]
    pub led: Option<String>,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    /// Codebook file.
    #[arg(required_unless_present = "fixture", conflicts_with = "fixture")]
    pub path: Option<PathBuf>,
    /// Built-in fixture id (IIa, IIb, IIc, IId).
    #[arg(long)]
    pub fixture: Option<String>,
    /// `linear` or `kingbright`; sets how average power is computed.
    #[arg(long, default_value = "linear")]
    pub led: String,
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// System name to take from the first file (default: its first system).
    #[arg(long)]
    pub system_a: Option<String>,
    #[arg(long)]
    pub system_b: Option<String>,
    #[arg(long, default_value_t = ookdim::evaluator::DEFAULT_TARGET_SER)]
    pub target_ser: f64,
}

fn parse_delay_mode(s: &str) -> Result<DelayMode, String> {
    match s {
        "literal" => Ok(DelayMode::Literal),
        "fractional" => Ok(DelayMode::Fractional),
        other => Err(format!("unknown delay mode `{other}` (expected literal or fractional)")),
    }
}

fn parse_csi(s: &str) -> Result<CsiModel, String> {
    s.parse().map_err(|e: ookdim::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
