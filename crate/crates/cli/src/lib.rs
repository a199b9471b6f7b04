//! `tile4f` command-line front end.
//!
//! Every command writes one report (CSV or JSON) whose first line or
//! `manifest` field records the full configuration. Flags can be set through
//! `TILE4F_*` environment variables; flags on the command line win.

mod commands;
pub mod report;
pub mod simulate;

use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use tile4f_core::nn::Pipeline;
use tile4f_core::{BitDepth, Error, ErrorKind, Result, Scheme};

use report::Format;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "tile4f",
    version,
    about = "Tiling planner and simulator for 4F optical CNN accelerators"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pick a tiling per layer and report frames, utilization and resolutions.
    Plan(PlanArgs),
    /// Run one random layer through a scheme and report error against the oracle.
    Simulate(SimulateArgs),
    /// Per-layer and total inference time of a conv stack.
    Perf(PerfArgs),
    /// Accuracy and per-layer error of the reference model over a sensor grid.
    Sweep(SweepArgs),
    /// Regenerate the reference model and datasets.
    GenerateReference(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// SLM side length D in pixels [default: 4096; 64 for simulate; the
    /// model's own for sweep].
    #[arg(long = "slm-d", env = "TILE4F_SLM_D")]
    pub slm_d: Option<usize>,
    /// SLM frame rate in Hz.
    #[arg(long = "freq-hz", env = "TILE4F_FREQ_HZ", default_value_t = 2e6)]
    pub freq_hz: f64,
    #[arg(long, env = "TILE4F_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "TILE4F_FORMAT", value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file; stdout when absent.
    #[arg(long, env = "TILE4F_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct NetworkArgs {
    /// Network preset name or path to a network JSON file.
    #[arg(long, env = "TILE4F_NETWORK", conflicts_with = "layer")]
    pub network: Option<String>,
    /// Single layer as `M,N,Nc,Nk`.
    #[arg(long)]
    pub layer: Option<String>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub net: NetworkArgs,
    /// Tiling scheme or `auto`.
    #[arg(long, env = "TILE4F_SCHEME", default_value = "auto")]
    pub scheme: SchemeChoice,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Layer as `M,N,Nc,Nk`.
    #[arg(long, default_value = "8,3,4,3")]
    pub layer: String,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, default_value = "same", value_parser = ["same", "valid"])]
    pub mode: String,
    /// Tiling scheme or `auto`.
    #[arg(long, env = "TILE4F_SCHEME", default_value = "auto")]
    pub scheme: SchemeChoice,
    /// Camera bit depth: an integer or `inf`.
    #[arg(long, env = "TILE4F_BITS", default_value = "inf")]
    pub bits: BitDepth,
    /// Camera SNR in dB, or `inf` for no noise.
    #[arg(long = "snr-db", env = "TILE4F_SNR_DB", default_value = "inf")]
    pub snr_db: Snr,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct PerfArgs {
    #[command(flatten)]
    pub net: NetworkArgs,
    /// Tiling scheme, `auto`, or `all` for one block per scheme.
    #[arg(long, env = "TILE4F_SCHEME", default_value = "all")]
    pub scheme: SchemeChoice,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(
        long,
        env = "TILE4F_MODEL",
        default_value = "data/reference/model.t4fm"
    )]
    pub model: PathBuf,
    /// Evaluation dataset directory.
    #[arg(long, env = "TILE4F_DATA", default_value = "data/reference/test")]
    pub data: PathBuf,
    /// Dataset used to fix each layer's camera exposure.
    #[arg(
        long,
        env = "TILE4F_CALIBRATION",
        default_value = "data/reference/calibration"
    )]
    pub calibration: PathBuf,
    /// `calibrated` (fixed per-layer full scale) or `per-frame` auto-exposure.
    #[arg(long, default_value = "calibrated", value_parser = ["calibrated", "per-frame"])]
    pub exposure: String,
    /// Comma-separated bit depths.
    #[arg(
        long,
        env = "TILE4F_BITS",
        value_delimiter = ',',
        default_value = "8,12,inf"
    )]
    pub bits: Vec<BitDepth>,
    /// Comma-separated SNRs in dB; `inf` is noiseless.
    #[arg(
        long = "snr-db",
        env = "TILE4F_SNR_DB",
        value_delimiter = ',',
        default_value = "15,20,30,inf"
    )]
    pub snr_db: Vec<Snr>,
    /// Comma-separated pipelines.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "ideal-oracle,channel-4f,filter-4f-pseudoneg"
    )]
    pub pipelines: Vec<Pipeline>,
    /// Evaluate only the first N images.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Skip the per-layer error measurement.
    #[arg(long)]
    pub no_layer_errors: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory.
    #[arg(long, env = "TILE4F_OUT", default_value = "data/reference")]
    pub out: PathBuf,
    #[arg(long, env = "TILE4F_SEED", default_value_t = tile4f_core::nn::reference::SEED)]
    pub seed: u64,
}

/// `--scheme` value: a fixed scheme, `auto` (planner's choice per layer) or
/// `all` (every scheme, `perf` only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeChoice {
    Auto,
    All,
    Fixed(Scheme),
}

impl FromStr for SchemeChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SchemeChoice::Auto),
            "all" => Ok(SchemeChoice::All),
            _ => s.parse().map(SchemeChoice::Fixed),
        }
    }
}

impl std::fmt::Display for SchemeChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SchemeChoice::Auto => f.write_str("auto"),
            SchemeChoice::All => f.write_str("all"),
            SchemeChoice::Fixed(s) => write!(f, "{s}"),
        }
    }
}

/// Camera SNR in dB; `None` is noiseless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr(pub Option<f64>);

impl FromStr for Snr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "none" => Ok(Snr(None)),
            _ => match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Snr(Some(v))),
                _ => Err(Error::Config(format!(
                    "SNR must be a number of dB or 'inf', got '{s}'"
                ))),
            },
        }
    }
}

impl Snr {
    pub fn label(self) -> String {
        self.0.map_or("inf".into(), |v| v.to_string())
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Infeasible => EXIT_INFEASIBLE,
        ErrorKind::Io => EXIT_IO,
        ErrorKind::Validation => EXIT_VALIDATION,
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("tile4f: {e}");
            exit_code(&e)
        }
    }
}
