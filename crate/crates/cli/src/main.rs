//! `selgen` — train, decode, and evaluate selective text generation models
//! over structured record databases.

mod cmd_evaluate;
mod cmd_generate;
mod cmd_inspect;
mod cmd_synth;
mod cmd_train;
mod util;

use clap::{Parser, Subcommand};

use util::CliError;

#[derive(Parser)]
#[command(
    name = "selgen",
    version,
    about = "Selective generation: describe structured records in text",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic weather-style corpus (train/dev/test splits).
    Synth(cmd_synth::SynthArgs),
    /// Train a model (or an ensemble) on a corpus.
    Train(cmd_train::TrainArgs),
    /// Decode descriptions for a corpus from one or more checkpoints.
    Generate(cmd_generate::GenerateArgs),
    /// Generate with beam search reranked against nearest training
    /// scenarios (shorthand for `generate --decode knn`).
    Filter(cmd_generate::FilterArgs),
    /// Score generated descriptions against references.
    Evaluate(cmd_evaluate::EvaluateArgs),
    /// Look inside a checkpoint: embedding neighbors, alignment heat maps,
    /// parameter statistics.
    Inspect(cmd_inspect::InspectArgs),
}

fn main() {
    // Usage errors caught by the parser exit with code 2 via clap itself.
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth::run(args),
        Command::Train(args) => cmd_train::run(args),
        Command::Generate(args) => cmd_generate::run(args),
        Command::Filter(args) => cmd_generate::run_filter(args),
        Command::Evaluate(args) => cmd_evaluate::run(args),
        Command::Inspect(args) => cmd_inspect::run(args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}
