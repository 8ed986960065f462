//! `qoeseq`: discrete sequence models for QoE state prediction over network
//! telemetry. Each subcommand is one pipeline phase; `pipeline` chains them
//! end to end and writes a full comparison report.

mod commands;
mod config;
mod error;
mod io;
mod manifest;

use clap::{Parser, Subcommand};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "qoeseq",
    version,
    about = "Vector-quantized HMM pipeline for QoE state prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a telemetry CSV and write a dataset summary.
    Ingest(commands::IngestArgs),
    /// Fit a k-means codebook (with its standardizer) on training telemetry.
    FitVq(commands::FitVqArgs),
    /// Quantize telemetry into discrete tokens with a fitted codebook.
    Encode(commands::EncodeArgs),
    /// Fit a supervised HMM on labeled token sequences.
    FitHmm(commands::FitHmmArgs),
    /// Viterbi-decode token sequences into state paths.
    Decode(commands::DecodeArgs),
    /// Score decoded states against ground truth; metrics, confusion, plots.
    Evaluate(commands::EvaluateArgs),
    /// Sample a synthetic labeled dataset from a generator spec.
    Generate(commands::GenerateArgs),
    /// Measure inference latency of a fitted model.
    Bench(commands::BenchArgs),
    /// Run the full chain: data, codebook, models, baselines, comparison.
    Pipeline(commands::PipelineArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest(args) => commands::ingest(args),
        Command::FitVq(args) => commands::fit_vq(args),
        Command::Encode(args) => commands::encode(args),
        Command::FitHmm(args) => commands::fit_hmm(args),
        Command::Decode(args) => commands::decode(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Generate(args) => commands::generate(args),
        Command::Bench(args) => commands::bench(args),
        Command::Pipeline(args) => commands::pipeline(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("{err}");
        std::process::exit(1);
    }
}
