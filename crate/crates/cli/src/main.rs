//! `anoml`: ingest, train, deploy, infer, simulate, codegen, report, retrain.
//!
//! Exit codes: 0 success, 1 usage, 2 validation, 3 runtime. Failures print
//! one JSON object `{"error": <class>, "message": <text>}` on stderr.

mod commands;
mod error;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "anoml",
    version,
    about = "Edge/fog/cloud anomaly-detection pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a CSV, a wire-message stream or synthetic data into the frame store.
    Ingest(IngestArgs),
    /// Fit a transform and detector on the normal rows of a frame.
    Train(TrainArgs),
    /// Verify an artifact and copy it to a target, or serve it over HTTP.
    Deploy(DeployArgs),
    /// Score a labeled frame with a local artifact or a running service.
    Infer(InferArgs),
    /// Run a packet workload over a topology and report latency statistics.
    Simulate(SimulateArgs),
    /// Generate the transmitter/receiver bundle for an edge node spec.
    Codegen(CodegenArgs),
    /// Replay a frame through placement scenarios and emit a metrics table.
    Report(ReportArgs),
    /// Refit an artifact's detector on accumulated normal data.
    Retrain(RetrainArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    /// Labeled CSV file.
    #[arg(long, conflicts_with_all = ["stream", "synth"])]
    pub csv: Option<PathBuf>,
    /// Wire-message file, one `timestamp_ms,message` or bare message per line.
    #[arg(long, conflicts_with = "synth")]
    pub stream: Option<PathBuf>,
    /// Generate a synthetic frame.
    #[arg(long)]
    pub synth: bool,
    /// Name in the frame store.
    #[arg(long)]
    pub name: String,
    /// Config file; its [schema] table maps CSV columns.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub rows: usize,
    #[arg(long, default_value_t = 3)]
    pub features: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Injected anomaly `start:end:mode:magnitude[:f0,f1,..]`; repeatable.
    #[arg(long)]
    pub inject: Vec<String>,
    /// Interval between bare stream messages.
    #[arg(long, default_value_t = 1000)]
    pub interval_ms: u64,
}

#[derive(Args)]
pub struct TrainArgs {
    /// CSV path or frame-store name.
    #[arg(long = "in")]
    pub input: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Scaling/reduction: NS, MM, SS, Average, StDev, Skew, Kurtosis, MAD.
    #[arg(long)]
    pub sr: Option<String>,
    /// if, ocsvm or ae.
    #[arg(long)]
    pub detector: Option<String>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Config file with [transform], [detector] and [schema] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct DeployArgs {
    /// Artifact path or http(s) URL.
    #[arg(long)]
    pub model: String,
    /// Copy the verified artifact here; a directory (existing, or given with a
    /// trailing slash) receives `<model_id>.anml`.
    #[arg(long, conflicts_with = "serve")]
    pub target: Option<PathBuf>,
    /// Serve the artifact on this address, e.g. 127.0.0.1:8080.
    #[arg(long)]
    pub serve: Option<String>,
}

#[derive(Args)]
pub struct InferArgs {
    /// Local artifact.
    #[arg(
        long,
        conflicts_with = "endpoint",
        required_unless_present = "endpoint"
    )]
    pub model: Option<PathBuf>,
    /// Base URL of a running service.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// CSV path or frame-store name.
    #[arg(long = "in")]
    pub input: String,
    /// Write the metrics CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Count anomalous as the positive class.
    #[arg(long)]
    pub invert_positive: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Config with [topology] and optionally [workload].
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long)]
    pub packets: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trace output; `.ndjson` or CSV by extension.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args)]
pub struct CodegenArgs {
    /// Config with a [node] table.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Artifact; repeatable.
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    /// CSV path or frame-store name.
    #[arg(long = "in")]
    pub input: String,
    /// Config with [topology] (default: Wi-Fi edge-fog-cloud chain) and
    /// optionally [scenario] and [schema].
    #[arg(long)]
    pub topology: Option<PathBuf>,
    /// Comma-separated tiers.
    #[arg(long, default_value = "edge,fog,cloud", value_delimiter = ',')]
    pub placements: Vec<String>,
    /// Only the autoencoder may run at the edge.
    #[arg(long)]
    pub realistic_edge: bool,
    #[arg(long)]
    pub invert_positive: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full scenario reports as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args)]
pub struct RetrainArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV paths or frame-store names, joined in order; repeatable.
    #[arg(long = "in", required = true)]
    pub input: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Train(a) => commands::train(a),
        Command::Deploy(a) => commands::deploy(a),
        Command::Infer(a) => commands::infer(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Codegen(a) => commands::codegen(a),
        Command::Report(a) => commands::report(a),
        Command::Retrain(a) => commands::retrain(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
