mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error(transparent)]
    Core(#[from] flockeval::Error),
    #[error("{0}")]
    Usage(String),
    #[error("validation found {0} problem(s)")]
    Invalid(usize),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        use flockeval::Error as E;
        match self {
            Failure::Invalid(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Core(E::Io { .. }) => 3,
            Failure::Core(E::Parse { .. } | E::Schema(_) | E::Merge(_)) => 4,
            Failure::Core(E::InvalidFoldCount { .. }) => 2,
            Failure::Core(_) => 5,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "flockeval",
    version,
    about = "Evaluate and simulate pen-camera bird annotations"
)]
struct Cli {
    /// JSON file supplying defaults for any long option of the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a dataset's polygons and ethogram sheets and report every problem.
    Validate(ValidateArgs),
    /// Write a k-fold split of a camera's videos.
    Split(SplitArgs),
    /// Pair predictions with ground truth at one IoU threshold.
    Match(MatchArgs),
    /// Detection AP and classification metrics.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset with predictions and their ledger.
    Generate(GenerateArgs),
    /// Time budgets per window and threshold flags.
    Welfare(WelfareArgs),
}

#[derive(Args, Debug, Serialize, Deserialize)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Write validation.json here instead of printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize, Deserialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Shuffle videos before blocking.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Serialize, Deserialize)]
pub struct MatchArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// IoU threshold; defaults to 0.5.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// bbox or segm.
    #[arg(long)]
    pub mode: Option<String>,
    /// Rasterization steps per pixel for non-convex polygons.
    #[arg(long)]
    pub resolution: Option<u32>,
}

#[derive(Args, Debug, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Predictions NDJSON.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Fold split from `split`; evaluates each fold on its test videos.
    #[arg(long)]
    pub folds: Option<PathBuf>,
    /// Directory of per-fold predictions named fold_<n>.ndjson, n from 1.
    #[arg(long)]
    pub fold_predictions: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Reported IoU threshold, repeatable. Defaults to 0.1, 0.5 and 0.75.
    #[arg(long)]
    pub alpha: Vec<f64>,
    /// Threshold for the pairs behind the classification metrics.
    #[arg(long)]
    pub match_alpha: Option<f64>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub resolution: Option<u32>,
    /// posture, binary_posture or behavior.
    #[arg(long)]
    pub task: Option<String>,
    /// Restrict classification to these class codes.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<String>,
    /// Add the wall-clock time to the report.
    #[arg(long)]
    pub stamp: bool,
}

#[derive(Args, Debug, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub camera: Option<u8>,
    /// Video id, repeatable.
    #[arg(long)]
    pub video: Vec<String>,
    #[arg(long)]
    pub birds: Option<usize>,
    /// Frames per video.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub drop_rate: Option<f64>,
    #[arg(long)]
    pub false_positive_rate: Option<f64>,
    /// Label family of the predictions.
    #[arg(long)]
    pub task: Option<String>,
    /// Predictions equal to the ground truth.
    #[arg(long)]
    pub clean: bool,
}

#[derive(Args, Debug, Serialize, Deserialize)]
pub struct WelfareArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Window length in frames; defaults to 300.
    #[arg(long)]
    pub window: Option<u64>,
    #[arg(long)]
    pub step: Option<u64>,
    /// Rule such as `DRK<0.01@300`, repeatable.
    #[arg(long)]
    pub rule: Vec<String>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let file = match &cli.config {
        Some(p) => config::load(p)?,
        None => Default::default(),
    };
    match cli.command {
        Command::Validate(a) => commands::validate(config::overlay(&a, &file)?),
        Command::Split(a) => commands::split(config::overlay(&a, &file)?),
        Command::Match(a) => commands::match_(config::overlay(&a, &file)?),
        Command::Evaluate(a) => commands::evaluate(config::overlay(&a, &file)?),
        Command::Generate(a) => commands::generate(config::overlay(&a, &file)?, &file),
        Command::Welfare(a) => commands::welfare(config::overlay(&a, &file)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("flockeval: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
