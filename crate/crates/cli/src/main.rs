mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "audioweave", version, about = "Forge, fine-tune and benchmark interleaved audio-text prompts")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML run configuration; missing sections take defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic component; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parent of the per-invocation run directory.
    #[arg(long, global = true, default_value = "runs")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic source records or the benchmark fixture.
    Fixture(commands::FixtureArgs),
    /// Rewrite source records into interleaved prompts.
    Forge(commands::ForgeArgs),
    /// Fine-tune on forged records under one prompt layout.
    Train(commands::TrainArgs),
    /// Score a checkpoint on the benchmark fixture.
    Eval(commands::EvalArgs),
    /// Tabulate metrics files side by side.
    Report(commands::ReportArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(64) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Fixture(a) => commands::fixture(&cli.global, a),
        Command::Forge(a) => commands::forge(&cli.global, a),
        Command::Train(a) => commands::train(&cli.global, a),
        Command::Eval(a) => commands::eval(&cli.global, a),
        Command::Report(a) => commands::report(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("audioweave: {e}");
            e.code()
        }
    }
}

pub type CliResult = Result<(), CliError>;
