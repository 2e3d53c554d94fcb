//! `s2l`: batch front end for trajectory-based data selection.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or format errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "s2l",
    version,
    about = "Select training subsets by clustering loss trajectories"
)]
pub struct Cli {
    /// Seed for every random decision [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: one per core). Output does not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trajectory file from a JSON list of templates.
    Synth(SynthArgs),
    /// Fit k-means to trajectories and write the cluster model as JSON.
    Cluster(ClusterArgs),
    /// Cluster trajectories and write a balanced selection manifest.
    Select(SelectArgs),
    /// Run a one-shot baseline selector and write a manifest.
    Baseline(BaselineArgs),
    /// Print cluster and selection diagnostics.
    Report(ReportArgs),
    /// Transcode a trajectory file between JSONL and binary.
    Convert(ConvertArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Binary,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormalizeArg {
    None,
    Zscore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Random,
    LeastConfidence,
    MiddlePerplexity,
    HighLearnability,
    FacilityLocation,
}

#[derive(Debug, Args)]
pub struct TrajInput {
    /// Trajectory file (.jsonl or .bin).
    #[arg(long)]
    pub traj: PathBuf,

    /// Trajectory format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON list of template specs.
    #[arg(long)]
    pub templates: PathBuf,

    /// Checkpoints per trajectory.
    #[arg(long = "checkpoints", short = 't')]
    pub checkpoints: usize,

    /// Output trajectory file.
    #[arg(long)]
    pub out: PathBuf,

    /// Output format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,

    /// Also write the ground-truth template index of every row (JSON).
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: TrajInput,

    /// Number of clusters.
    #[arg(long, default_value_t = 100)]
    pub k: usize,

    /// Maximum Lloyd iterations.
    #[arg(long, default_value_t = 20)]
    pub iters: usize,

    #[arg(long, value_enum, default_value = "none")]
    pub normalize: NormalizeArg,

    /// Output cluster model (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: TrajInput,

    /// Number of examples to select (required here or in --config).
    #[arg(long)]
    pub budget: Option<usize>,

    /// Number of clusters [default: 100].
    #[arg(long)]
    pub k: Option<usize>,

    /// Maximum Lloyd iterations [default: 20].
    #[arg(long)]
    pub iters: Option<usize>,

    /// Cluster and select independently within each source.
    #[arg(long)]
    pub per_source: bool,

    #[arg(long, value_enum)]
    pub normalize: Option<NormalizeArg>,

    /// Skip the pass that fills leftover budget at random.
    #[arg(long)]
    pub no_topup: bool,

    /// JSON file with selection settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Output manifest (JSONL).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: Method,

    /// Trajectory file; required except for facility-location, where it only
    /// supplies source tags.
    #[arg(long)]
    pub traj: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,

    /// Feature file (binary) for facility-location.
    #[arg(long)]
    pub features: Option<PathBuf>,

    #[arg(long)]
    pub budget: usize,

    /// Checkpoint index of the "before" loss for learnability.
    #[arg(long, default_value_t = 0)]
    pub early_index: usize,

    /// Checkpoint index used for confidence, perplexity and the "after"
    /// learnability loss [default: last].
    #[arg(long)]
    pub late_index: Option<usize>,

    /// Output manifest (JSONL).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Cluster model JSON written by `cluster`.
    #[arg(long)]
    pub model: PathBuf,

    /// Trajectory file the model was fitted on (needed with --manifest).
    #[arg(long)]
    pub traj: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,

    /// Selection manifest to compare against the full dataset.
    #[arg(long)]
    pub manifest: Option<PathBuf>,

    /// Print JSON instead of the text table.
    #[arg(long)]
    pub json: bool,

    /// Write the JSON report to a file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[command(flatten)]
    pub input: TrajInput,

    /// Output trajectory file.
    #[arg(long)]
    pub out: PathBuf,

    /// Output format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub to: Option<FormatArg>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
