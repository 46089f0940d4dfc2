//! `effbench`: calibrate problem manifests, evaluate code samples, and score
//! the results with eff@k / pass@k.

mod commands;
mod results;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "effbench", version, about = "Code-efficiency evaluation harness")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time the reference solutions and write a calibrated manifest.
    Calibrate(CalibrateArgs),
    /// Run every code sample through the level-based harness.
    Evaluate(EvaluateArgs),
    /// Compute eff@k, pass@k and speedup from evaluation results.
    Score(ScoreArgs),
    /// Run the statistical self-test suites of the eff@k estimator.
    Selftest(SelftestArgs),
    /// Append generated test cases to a problem in a manifest.
    ImportCases(ImportArgs),
}

#[derive(Args)]
pub struct RunnerArgs {
    /// Runner command line; the job file path is appended.
    #[arg(long, default_value = "python3 demo/minimal_runner.py")]
    pub runner: String,
    /// Seconds added to each job's budget before the worker is killed.
    #[arg(long, default_value_t = 10.0)]
    pub hard_kill_margin: f64,
    /// Address-space ceiling for workers in MiB (0 disables it).
    #[arg(long, default_value_t = 4096)]
    pub memory_mib: u64,
    /// Timed repeats per test case.
    #[arg(long, default_value_t = effbench_core::timing::DEFAULT_REPEATS)]
    pub repeats: usize,
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub problemset: PathBuf,
    /// Directory holding `<problem_id>.<ext>` reference solutions.
    #[arg(long)]
    pub references: PathBuf,
    /// Where to write the calibrated manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Timeout factor: T = alpha * slowest reference time.
    #[arg(long, default_value_t = effbench_core::timing::DEFAULT_TIMEOUT_FACTOR)]
    pub alpha: f64,
    /// Upper bound in seconds on any single reference case.
    #[arg(long, default_value_t = 60.0)]
    pub reference_ceiling: f64,
    #[command(flatten)]
    pub runner: RunnerArgs,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Calibrated manifest.
    #[arg(long)]
    pub problemset: PathBuf,
    /// Directory with one file per sample: `<problem_id>/<sample_index>[.ext]`.
    #[arg(long)]
    pub samples: PathBuf,
    /// Results file (one JSON record per line); appended to and resumed.
    #[arg(long)]
    pub out: PathBuf,
    /// Hardness weights for levels 1..L, overriding the manifest.
    #[arg(long, value_delimiter = ',')]
    pub hardness: Option<Vec<f64>>,
    /// Re-time each problem's reference here first and rescale candidate
    /// times to the machine the manifest was calibrated on.
    #[arg(long)]
    pub references: Option<PathBuf>,
    /// Evaluate this many samples concurrently. Degrades timing quality.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    #[command(flatten)]
    pub runner: RunnerArgs,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 10, 100])]
    pub k: Vec<usize>,
    /// Write the report as JSON here; the table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub problemset: PathBuf,
    #[arg(long)]
    pub problem: String,
    /// Generator command line; `--seed N` is appended.
    #[arg(long)]
    pub generator: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let outcome = match cli.command {
        Command::Calibrate(a) => commands::calibrate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Score(a) => commands::score(&a),
        Command::Selftest(a) => commands::selftest(&a),
        Command::ImportCases(a) => commands::import_cases(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
