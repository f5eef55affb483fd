//! `markmix` — sessionize event logs, cluster encoded sessions into a
//! mixture of Markov chains, run the synthetic noise experiment, evaluate
//! fitted models, and export chains as DOT graphs.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 data-validation
//! error.

mod commands;
mod manifest;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

/// Fixed default seed: runs are reproducible unless a seed is given.
pub const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(
    name = "markmix",
    version,
    about = "Cluster event sequences into a mixture of discrete Markov chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a raw event log and split it into encoded sessions.
    Sessionize(SessionizeArgs),
    /// Fit the chain mixture on encoded sessions (single k or a k sweep).
    Cluster(ClusterArgs),
    /// Generate a labelled synthetic corpus and run the noisy-prior sweep.
    Synth(SynthArgs),
    /// Evaluate a fitted model: chain stats, profiles, purity, permutation
    /// baseline.
    Eval(EvalArgs),
    /// Export each chain of a model as a Graphviz DOT file.
    ExportDot(ExportDotArgs),
}

#[derive(Args)]
pub struct SessionizeArgs {
    /// Event CSV: student_id,timestamp(RFC3339),kind,correct,topic_id.
    #[arg(long)]
    pub input: String,
    /// Directory the outputs are written to.
    #[arg(long)]
    pub out_dir: String,
    /// Session gap threshold in minutes; a gap of at least this splits.
    #[arg(long, default_value_t = markmix::ingest::DEFAULT_GAP_MINUTES)]
    pub gap_minutes: i64,
    /// Skip a header line in the input.
    #[arg(long, default_value_t = false)]
    pub has_header: bool,
}

#[derive(Args)]
pub struct ClusterArgs {
    /// Encoded sessions CSV produced by `sessionize` or `synth`.
    #[arg(long)]
    pub sessions: String,
    #[arg(long)]
    pub out_dir: String,
    /// Number of chains.
    #[arg(long, conflicts_with = "k_range")]
    pub k: Option<usize>,
    /// Inclusive sweep range `A:B`; writes the sweep table instead of a
    /// model.
    #[arg(long)]
    pub k_range: Option<String>,
    #[arg(long, default_value_t = markmix::cluster::DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[arg(long, default_value_t = markmix::cluster::DEFAULT_CONVERGENCE_FRACTION)]
    pub convergence_frac: f64,
    #[arg(long, default_value_t = markmix::cluster::DEFAULT_MAX_ITERATIONS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = markmix::cluster::DEFAULT_SMOOTHING)]
    pub smoothing: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: String,
    /// Number of generator chains.
    #[arg(long, default_value_t = 6)]
    pub k_true: usize,
    /// Corpus size per repetition.
    #[arg(long, default_value_t = 50_000)]
    pub n: usize,
    /// Probability of ending after each action.
    #[arg(long, default_value_t = 0.05)]
    pub end_prob: f64,
    /// Comma-separated prior noise levels in [0, 1].
    #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
    pub alphas: String,
    /// Repetitions per noise level.
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Model JSON produced by `cluster`.
    #[arg(long)]
    pub model: String,
    /// Encoded sessions CSV.
    #[arg(long)]
    pub sessions: String,
    #[arg(long)]
    pub out_dir: String,
    /// Truth labels CSV (columns session_id,label) for the purity report.
    #[arg(long)]
    pub truth: Option<String>,
    /// Also write per-student chain distributions.
    #[arg(long, default_value_t = false)]
    pub profiles: bool,
    /// Run the interior-permutation baseline over --k-range.
    #[arg(long, default_value_t = false)]
    pub permutation_baseline: bool,
    /// Inclusive `A:B` range of k values for the baseline.
    #[arg(long)]
    pub k_range: Option<String>,
    #[arg(long, default_value_t = markmix::cluster::DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[arg(long, default_value_t = markmix::cluster::DEFAULT_CONVERGENCE_FRACTION)]
    pub convergence_frac: f64,
    #[arg(long, default_value_t = markmix::cluster::DEFAULT_MAX_ITERATIONS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = markmix::cluster::DEFAULT_SMOOTHING)]
    pub smoothing: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Args)]
pub struct ExportDotArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub out_dir: String,
    /// Probability mass drawn per state (and into the end state).
    #[arg(long, default_value_t = 0.7)]
    pub coverage: f64,
}

/// Error categories mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Data(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Data(m) => m,
        }
    }
}

impl From<markmix::Error> for CliError {
    fn from(err: markmix::Error) -> Self {
        use markmix::Error;
        match &err {
            Error::Io(_) => CliError::Io(err.to_string()),
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => {
                CliError::Io(err.to_string())
            }
            Error::Json(e) if e.classify() == serde_json::error::Category::Io => {
                CliError::Io(err.to_string())
            }
            Error::InvalidConfig(_) => CliError::Usage(err.to_string()),
            _ => CliError::Data(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sessionize(args) => commands::sessionize(args),
        Command::Cluster(args) => commands::cluster(args),
        Command::Synth(args) => commands::synth(args),
        Command::Eval(args) => commands::eval(args),
        Command::ExportDot(args) => commands::export_dot(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {}", err.message());
        std::process::exit(err.code());
    }
}
