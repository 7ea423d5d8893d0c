//! `dualreport`: synthesize a corpus, train, generate, evaluate, analyze
//! and select checkpoints from the command line.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CliError, Kind};

#[derive(Debug, Parser)]
#[command(name = "dualreport", version, about = "Hierarchical report generation with dual word LSTMs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Flat `section.key = value` file applied over the built-in toy profile.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seeds corpus synthesis, the split, initialization and shuffling.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Use both word LSTMs (on) or a single one (off).
    #[arg(long, global = true, value_name = "on|off")]
    pub dual: Option<Switch>,
    /// Extra `section.key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic long-tail corpus and its sentence statistics.
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train on a corpus, evaluating on the validation split twice per epoch.
    Train {
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Greedily generate paragraphs for one split of a corpus.
    Generate {
        /// Directory written by `train`.
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
        /// Defaults to `<run>/generated-<split>.jsonl`.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Score generated paragraphs against references.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        hypotheses: PathBuf,
        /// A corpus directory, or a JSON-lines file of `{id, sentences}`.
        #[arg(long, value_name = "PATH")]
        references: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value = "generated")]
        label: String,
    },
    /// BLEU-4 and distinct-sentence series over a training history.
    Analyze {
        #[arg(long, value_name = "PATH")]
        history: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[arg(long, value_name = "N")]
        min_distinct: Option<usize>,
    },
    /// Pick the checkpoint with the best BLEU-4 among sufficiently
    /// distinctive ones.
    Select {
        #[arg(long, value_name = "PATH")]
        history: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[arg(long, value_name = "N")]
        min_distinct: Option<usize>,
    },
    /// Finite-difference check of the total-loss gradient.
    Gradcheck {
        /// Coordinates sampled per parameter tensor; 0 checks all of them.
        #[arg(long, default_value_t = 16)]
        coords: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e.to_string();
            let message = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return fail(CliError::new(Kind::Usage, message));
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_line());
    ExitCode::from(e.kind.exit_code() as u8)
}
