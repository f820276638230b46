//! `tinymatch`: one binary wiring dataset ingestion, corpus generation,
//! fine-tuning, prediction, evaluation, throughput benchmarking, and cost
//! estimation into reproducible commands. Every command writes a run
//! manifest capturing its effective config and input hashes.
//!
//! Exit codes: 0 success, 1 validation error (fixable input), 2 runtime
//! error (I/O, backend failure).

mod commands;
mod manifest;
mod rows;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tinymatch_core::{ErrorClass, Fallible};

/// Any command failure, tagged with the class that decides the exit code.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub class: ErrorClass,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            class: ErrorClass::Validation,
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            class: ErrorClass::Runtime,
        }
    }
}

macro_rules! from_fallible {
    ($($ty:ty),+) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError { message: e.to_string(), class: e.class() }
            }
        }
    )+};
}

from_fallible!(
    tinymatch_core::data::DataError,
    tinymatch_core::corpus::CorpusError,
    tinymatch_core::filter::FilterError,
    tinymatch_core::model::ModelError,
    tinymatch_core::eval::EvalError,
    tinymatch_core::perf::PerfError,
    tinymatch_core::serialize::SerializeError
);

#[derive(Parser)]
#[command(name = "tinymatch", version, about = "Zero-shot entity matching toolkit")]
struct Cli {
    /// JSON config file with per-command sections; CLI flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset directory and print its statistics.
    Ingest(IngestArgs),
    /// Build a fine-tuning corpus from transfer datasets, excluding the target.
    GenCorpus(GenCorpusArgs),
    /// Fine-tune a matcher on a generated corpus.
    Train(TrainArgs),
    /// Score record pairs from a CSV with a trained matcher.
    Predict(PredictArgs),
    /// Zero-shot evaluation of a trained matcher on a target dataset.
    Eval(EvalArgs),
    /// Probe the maximum batch size and measure tokens/second.
    BenchThroughput(BenchArgs),
    /// Convert throughput and instance price into cost per 1K tokens.
    EstimateCost(CostArgs),
    /// Evaluate the string-similarity baseline on a target dataset.
    BaselineStringsim(BaselineArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Dataset directory (manifest.json + train/valid/test CSVs).
    dir: PathBuf,
    /// Reject CSV columns that are not declared in the manifest.
    #[arg(long)]
    strict: bool,
    /// Also write the statistics JSON here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Directory whose subdirectories are the transfer datasets.
    #[arg(long, value_name = "DIR")]
    datasets: PathBuf,
    /// Target dataset to exclude (zero-shot purity).
    #[arg(long, value_name = "NAME")]
    target: String,
    /// Corpus JSONL output path (metadata sidecar written next to it).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Record-level pair budget per dataset (pre-flip).
    #[arg(long = "n-r", value_name = "N")]
    n_r: Option<usize>,
    /// Attribute-level sample cap per attribute.
    #[arg(long = "n-a", value_name = "N")]
    n_a: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Serialization variant `position+enclosure+marker`.
    #[arg(long, value_name = "VARIANT")]
    variant: Option<String>,
    /// Disable the difficulty filter (keep positives in file order).
    #[arg(long = "no-automl")]
    no_automl: bool,
    /// Disable flipped-twin augmentation.
    #[arg(long = "no-flip")]
    no_flip: bool,
    /// Attribute-level sample handling: mix, sequential, or off.
    #[arg(long = "attr-mode", value_name = "MODE")]
    attr_mode: Option<String>,
    /// Cache difficulty reports here, keyed by train-split fingerprint.
    #[arg(long = "cache-dir", value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus JSONL produced by gen-corpus.
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Checkpoint output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Base model preset (gpt2-124m needs TM_BASE_WEIGHTS).
    #[arg(long = "base-model", value_name = "PRESET")]
    base_model: Option<String>,
    #[arg(long = "learning-rate")]
    learning_rate: Option<f64>,
    #[arg(long = "weight-decay")]
    weight_decay: Option<f64>,
    #[arg(long = "max-epochs")]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long = "improvement-epsilon")]
    improvement_epsilon: Option<f64>,
    /// Fixed batch size, or `auto` to probe memory.
    #[arg(long = "batch-size", value_name = "N|auto")]
    batch_size: Option<String>,
    #[arg(long = "max-seq")]
    max_seq: Option<usize>,
    #[arg(long = "validation-fraction")]
    validation_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Checkpoint directory from train.
    #[arg(long, value_name = "DIR")]
    model: PathBuf,
    /// CSV of pairs: left_<attr>/right_<attr> columns, optional label.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Predictions JSONL output.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory whose subdirectories are datasets (target included).
    #[arg(long, value_name = "DIR")]
    datasets: PathBuf,
    /// Dataset to evaluate on; must be absent from the model's training
    /// provenance.
    #[arg(long, value_name = "NAME")]
    target: String,
    /// Checkpoint directory from train.
    #[arg(long, value_name = "DIR")]
    model: PathBuf,
    /// Disable the oversized-test down-sampling rule.
    #[arg(long = "no-downsample")]
    no_downsample: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the report JSON here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Checkpoint directory to benchmark.
    #[arg(long, value_name = "DIR", conflicts_with = "baseline")]
    model: Option<PathBuf>,
    /// Benchmark the string-similarity baseline instead of a checkpoint.
    #[arg(long)]
    baseline: bool,
    /// Number of timed batches.
    #[arg(long)]
    batches: Option<usize>,
    /// Upper bound for the batch-size search.
    #[arg(long)]
    ceiling: Option<usize>,
    /// Synthetic prompt count.
    #[arg(long)]
    prompts: Option<usize>,
    /// Approximate synthetic prompt length in characters.
    #[arg(long = "prompt-len")]
    prompt_len: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the throughput report JSON here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    /// Measured throughput in tokens/second.
    #[arg(long, value_name = "TOKENS_PER_S", conflicts_with = "report")]
    throughput: Option<f64>,
    /// Read throughput from a bench-throughput report JSON instead.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Hourly instance price in dollars.
    #[arg(long = "hourly-price", value_name = "DOLLARS")]
    hourly_price: Option<f64>,
    /// Scale-out factor from the measured machine to the priced one.
    #[arg(long = "extrapolation-factor")]
    extrapolation_factor: Option<f64>,
    /// Name for the self-hosted row in the comparison table.
    #[arg(long, value_name = "NAME")]
    name: Option<String>,
    /// JSON pricing table replacing the built-in API price constants.
    #[arg(long = "pricing-config", value_name = "FILE")]
    pricing_config: Option<PathBuf>,
    /// Also write the estimate JSON here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    /// Directory whose subdirectories are datasets (target included).
    #[arg(long, value_name = "DIR")]
    datasets: PathBuf,
    #[arg(long, value_name = "NAME")]
    target: String,
    /// Match iff the similarity ratio is strictly greater than this.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long = "no-downsample")]
    no_downsample: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file_config: Option<serde_json::Value> = match &cli.config {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
            Some(serde_json::from_str(&raw).map_err(|e| {
                CliError::validation(format!("{}: invalid config file: {e}", path.display()))
            })?)
        }
        None => None,
    };
    let section = |name: &str| -> Option<serde_json::Value> {
        file_config.as_ref().and_then(|v| v.get(name)).cloned()
    };

    match cli.command {
        Command::Ingest(args) => commands::ingest(args),
        Command::GenCorpus(args) => {
            let sec = section("gen-corpus");
            commands::gen_corpus(args, sec.as_ref())
        }
        Command::Train(args) => {
            let sec = section("train");
            commands::train(args, sec.as_ref())
        }
        Command::Predict(args) => commands::predict(args),
        Command::Eval(args) => commands::eval(args),
        Command::BenchThroughput(args) => {
            let sec = section("bench-throughput");
            commands::bench_throughput(args, sec.as_ref())
        }
        Command::EstimateCost(args) => {
            let sec = section("estimate-cost");
            commands::estimate_cost(args, sec.as_ref())
        }
        Command::BaselineStringsim(args) => commands::baseline_stringsim(args),
    }
}

/// Die quietly when output is piped into something that exits early
/// (`tinymatch ingest … | head`), like any other well-behaved filter.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors; anything else is bad input.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            match e.class {
                ErrorClass::Validation => ExitCode::from(1),
                ErrorClass::Runtime => ExitCode::from(2),
            }
        }
    }
}
