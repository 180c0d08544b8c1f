use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ztrv_core::Mode;

#[derive(Debug, Parser)]
#[command(name = "ztrv", version, about = "Zero-trust runtime verifier for mandate-based agent payments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the verification gateway until interrupted.
    Serve(ServeArgs),
    /// Interception and false-positive rates for every attack scenario in one mode.
    AttackEval(AttackEvalArgs),
    /// Interception matrix across all enforcement modes and attack scenarios.
    Ablation(AblationArgs),
    /// Peak registry size for several freshness windows on a virtual clock.
    TtlSweep(TtlSweepArgs),
    /// Per-stage verification latency and throughput at several offered rates.
    Throughput(ThroughputArgs),
    /// Generate an issuer key pair and the matching keystore file.
    Keygen(KeygenArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Gateway config file; falls back to $ZTRV_CONFIG.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Baseline,
    ContextOnly,
    NonceOnly,
    Full,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Baseline => Mode::Baseline,
            ModeArg::ContextOnly => Mode::ContextOnly,
            ModeArg::NonceOnly => Mode::NonceOnly,
            ModeArg::Full => Mode::Full,
        }
    }
}

#[derive(Debug, Args)]
pub struct Output {
    /// Directory for the CSV and JSON reports (created if missing).
    #[arg(long, default_value = "reports")]
    pub out: PathBuf,
    /// Use this instead of a timestamp in report file names.
    #[arg(long)]
    pub fixed_name: Option<String>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// Legitimate requests per scenario.
    #[arg(long, default_value_t = 5000, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Attack requests injected per scenario.
    #[arg(long, default_value_t = 100)]
    pub replay_count: usize,
    /// Workers submitting simultaneous requests.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..=1024))]
    pub concurrency: u64,
}

#[derive(Debug, Args)]
pub struct AttackEvalArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub attack: AttackArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[command(flatten)]
    pub attack: AttackArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct TtlSweepArgs {
    /// Freshness windows in seconds.
    #[arg(long, value_delimiter = ',', default_value = "5,30,60,300", value_parser = clap::value_parser!(u64).range(1..))]
    pub windows: Vec<u64>,
    /// Requests per second.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub rate: u64,
    /// Seconds of traffic.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub duration: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ThroughputArgs {
    /// Offered rates in requests per second.
    #[arg(long, value_delimiter = ',', default_value = "100,1000,5000,10000", value_parser = clap::value_parser!(u64).range(1..))]
    pub rates: Vec<u64>,
    /// Seconds per rate.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub duration: u64,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..=1024))]
    pub concurrency: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    /// Keystore file to write (key id to base64 public key).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "issuer-1")]
    pub key_id: String,
    /// Issuer secret key file [default: <out stem>.issuer.json next to --out].
    #[arg(long)]
    pub issuer_out: Option<PathBuf>,
}
