//! `perceptkit`: simulation studies, keypress decoding, cascades, HYPE scoring,
//! and the task service, from one binary.
//!
//! Every artifact-producing subcommand writes its outputs plus a
//! `manifest.json` into `--out-dir`. Settings resolve as flags over the
//! `--config` JSON file over built-in defaults. With `--server`, the numeric
//! work runs on a task service instead of in-process.

mod artifacts;
mod commands;
mod report;
mod session;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "perceptkit", version, about = "Rapid crowd labeling and HYPE human evaluation toolkit")]
pub struct Cli {
    /// Task service to offload computation to, e.g. http://127.0.0.1:8640.
    #[arg(long, global = true, env = "PERCEPTKIT_SERVER")]
    pub server: Option<String>,

    /// Worker threads for parallel simulation; results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Repeat for more log output on stderr (overridden by RUST_LOG).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for outputs and the run manifest.
    #[arg(short, long, default_value = "perceptkit-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a binary rapid-labeling study and decode it.
    Simulate(SimulateArgs),
    /// Fit the reaction-delay model from streams with known positives.
    Calibrate(CalibrateArgs),
    /// Decode keypress logs into per-item posteriors.
    Decode(DecodeArgs),
    /// Label a multi-class corpus with successive binary passes.
    Cascade(CascadeArgs),
    /// Simulate timed HYPE evaluators on the adaptive staircase.
    StaircaseSim(StaircaseSimArgs),
    /// Score untimed HYPE judgments.
    HypeScore(HypeScoreArgs),
    /// Check evaluators against the qualification threshold.
    Qualify(QualifyArgs),
    /// Percentile bootstrap interval of a mean.
    Bootstrap(BootstrapArgs),
    /// Run the task service.
    Serve(ServeArgs),
    /// Render Table-1 or Table-3 shaped summaries from earlier runs.
    Report(ReportArgs),
    /// Manage sessions on a running task service.
    #[command(subcommand)]
    Session(SessionCommand),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub n_items: Option<usize>,
    #[arg(long)]
    pub positive_fraction: Option<f64>,
    #[arg(long)]
    pub redundancy: Option<u32>,
    #[arg(long)]
    pub exposure_ms: Option<f64>,
    #[arg(long)]
    pub target_precision: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Redundancy plan JSON whose streams carry ground truth.
    #[arg(long)]
    pub plan: PathBuf,
    /// Keypress log, NDJSON.
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub match_window_ms: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub responses: PathBuf,
    /// Corpus manifest with ground truth; enables precision and recall.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Delay model JSON as written by `calibrate`.
    #[arg(long)]
    pub delay_model: Option<PathBuf>,
    /// Fixed posterior cutoff; disables threshold tuning.
    #[arg(long, conflicts_with = "target_precision")]
    pub threshold: Option<f64>,
    /// Tune the cutoff for this precision (needs --corpus).
    #[arg(long)]
    pub target_precision: Option<f64>,
    #[arg(long)]
    pub prior: Option<f64>,
    /// Conventional seconds per item, for the speedup.
    #[arg(long)]
    pub conv_time_s: Option<f64>,
    #[arg(long)]
    pub conv_redundancy: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Optimized,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelerArg {
    /// Every pass claims exactly the items of its class.
    Perfect,
    /// Each pass is a simulated rapid-labeling study.
    Simulated,
}

#[derive(Debug, Args)]
pub struct CascadeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Corpus manifest whose items carry class labels.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(long, value_enum)]
    pub labeler: Option<LabelerArg>,
    #[arg(long)]
    pub redundancy: Option<u32>,
    #[arg(long)]
    pub exposure_ms: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StaircaseSimArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub evaluators: Option<usize>,
    /// Exposure at which simulated evaluators reach mid accuracy.
    #[arg(long)]
    pub tau_ms: Option<f64>,
    #[arg(long)]
    pub block_len: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct HypeScoreArgs {
    #[command(flatten)]
    pub common: Common,
    /// Judgment log, NDJSON.
    #[arg(long, required_unless_present = "simulate")]
    pub judgments: Option<PathBuf>,
    /// Simulate this many evaluators instead of reading judgments.
    #[arg(long, conflicts_with = "judgments")]
    pub simulate: Option<usize>,
    #[arg(long)]
    pub bootstrap_iters: Option<usize>,
    #[arg(long)]
    pub ci_level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct QualifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub judgments: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub common: Common,
    /// Scores: a JSON array or one number per line.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = perceptkit_service::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, env = perceptkit_service::DATA_DIR_ENV, default_value = "perceptkit-data")]
    pub data_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableArg {
    /// Precision, recall and speedup per task, from `decode` or `simulate` runs.
    Table1,
    /// HYPE-infinity scores per model, from `hype-score` runs.
    Table3,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub table: TableArg,
    /// Row source as NAME=PATH; PATH is a run directory or its report JSON.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    /// Create a session from a task spec JSON file.
    Create {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        participant: Option<String>,
    },
    List,
    /// Task spec and progress of a session.
    Show { id: String },
    /// Append events from an NDJSON file.
    Append {
        id: String,
        #[arg(long)]
        events: PathBuf,
    },
    /// Finalize a session and write its export.
    Finalize {
        id: String,
        #[arg(short, long, default_value = "perceptkit-out")]
        out_dir: PathBuf,
    },
    /// Write a session's export (a snapshot if still open).
    Export {
        id: String,
        #[arg(short, long, default_value = "perceptkit-out")]
        out_dir: PathBuf,
    },
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match commands::run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
