//! `mwr` — train and evaluate self-contrastive breast-screening models on
//! synthetic microwave-radiometry exams.

mod commands;
mod parallel;
mod runs;

use clap::{Parser, Subcommand};

use runs::exit_code_for;

#[derive(Parser)]
#[command(
    name = "mwr",
    version,
    about = "Self-contrastive MWR models: synthetic data, training, evaluation, sweeps, ensembles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic exam dataset CSV (plus a config sidecar).
    GenData(commands::gen::GenDataArgs),
    /// Train one model and write a run directory.
    Train(commands::train::TrainArgs),
    /// Evaluate a checkpoint on a data split.
    Eval(commands::eval::EvalArgs),
    /// Batch-size, training-fraction, or robustness sweeps.
    Sweep(commands::sweep::SweepArgs),
    /// Compare ensemble strategies over pre-trained sub-models.
    Ensemble(commands::ensemble::EnsembleArgs),
    /// Export embedding-hook vectors and distance statistics.
    ExportEmbeddings(commands::export::ExportArgs),
    /// Run the whole experimental protocol at desk scale.
    ReproduceAll(commands::reproduce::ReproduceArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 0 for --help/--version and 2 for usage errors.
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::GenData(args) => commands::gen::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
        Command::Ensemble(args) => commands::ensemble::run(args),
        Command::ExportEmbeddings(args) => commands::export::run(args),
        Command::ReproduceAll(args) => commands::reproduce::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code_for(&e));
    }
}
