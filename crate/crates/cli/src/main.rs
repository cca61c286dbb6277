//! Command-line entry point for the evidence-grounded rumor detection
//! pipeline.
//!
//! Every subcommand writes only below its `--out` directory. Failures print
//! one JSON line to stderr and exit with 2 (usage), 3 (data) or 4 (numeric).

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use failure::{Failure, EXIT_OK};

/// Relative input paths missing from the working directory are looked up
/// under this directory.
pub const DATA_DIR_ENV: &str = "RUMORSAGE_DATA_DIR";

#[derive(Parser, Debug)]
#[command(name = "rumorsage", version, about = "Evidence-grounded rumor detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Precedence: `--set` and `--seed` over `--config` over built-in defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one field, e.g. `--set hidden=64` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct WorkerArgs {
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Args, Debug, Clone)]
pub struct EventArgs {
    /// Events, one JSON object per line.
    #[arg(long)]
    pub events: PathBuf,
    /// Evidence records keyed by event id.
    #[arg(long)]
    pub evidence: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    #[command(flatten)]
    pub data: EventArgs,
    /// Split part to score.
    #[arg(long, value_enum, default_value_t = commands::Part::Test)]
    pub part: commands::Part,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate events, evidence and corpus; write normalized copies.
    Ingest {
        #[command(flatten)]
        data: EventArgs,
        /// Encyclopedia corpus that evidence references must resolve in.
        #[arg(long)]
        wiki: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the vocabulary from the training split.
    BuildVocab {
        #[command(flatten)]
        data: EventArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the TF-IDF index over a corpus and report its statistics.
    Index {
        #[arg(long)]
        wiki: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrieve and verify evidence for every event.
    Retrieve {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        wiki: PathBuf,
        /// Directory written by `train-verifier`; without it every
        /// relation is NEI.
        #[arg(long)]
        verifier: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        workers: WorkerArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the claim verifier on labelled pairs.
    TrainVerifier {
        /// Pairs, one `{claim, sentence, relation}` object per line.
        #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
        pairs: Option<PathBuf>,
        /// Train on this many generated negation-cue pairs instead.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        /// GloVe-format text embeddings.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the detector and score the test split.
    Train {
        #[command(flatten)]
        data: EventArgs,
        /// GloVe-format text embeddings.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Vocabulary file to use instead of building one.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        workers: WorkerArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trained run.
    Evaluate(RunArgs),
    /// Score a trained run with replies cut to the earliest n.
    EarlyDetect {
        #[command(flatten)]
        run: RunArgs,
        /// Reply counts; defaults to 5, 10, ..., 45.
        #[arg(long, value_delimiter = ',')]
        counts: Vec<usize>,
    },
    /// Relation distribution, P(rumor | REFUTED) and the evidence-count sweep.
    AnalyzeEvidence {
        #[command(flatten)]
        data: EventArgs,
        /// Also retrain at every evidence cap, with and without NEI screening.
        #[arg(long)]
        sweep: bool,
        /// Largest evidence cap of the sweep.
        #[arg(long, default_value_t = 5)]
        max_evidence: usize,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        workers: WorkerArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference checks of every op and the end-to-end loss.
    GradCheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> failure::Outcome {
    match cli.command {
        Command::Ingest { data, wiki, out } => commands::ingest(&data, wiki.as_deref(), &out),
        Command::BuildVocab { data, config, out } => commands::build_vocab(&data, &config, &out),
        Command::Index { wiki, out } => commands::index(&wiki, &out),
        Command::Retrieve {
            events,
            wiki,
            verifier,
            config,
            workers,
            out,
        } => commands::retrieve(&events, &wiki, verifier.as_deref(), &config, &workers, &out),
        Command::TrainVerifier {
            pairs,
            synthetic,
            epochs,
            embeddings,
            config,
            out,
        } => commands::train_verifier(pairs.as_deref(), synthetic, epochs, embeddings.as_deref(), &config, &out),
        Command::Train {
            data,
            embeddings,
            vocab,
            config,
            workers,
            out,
        } => commands::train(&data, embeddings.as_deref(), vocab.as_deref(), &config, &workers, &out),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::EarlyDetect { run, counts } => commands::early_detect(&run, &counts),
        Command::AnalyzeEvidence {
            data,
            sweep,
            max_evidence,
            config,
            workers,
            out,
        } => commands::analyze_evidence(&data, sweep, max_evidence, &config, &workers, &out),
        Command::GradCheck { seed, out } => commands::grad_check(seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::from(EXIT_OK as u8);
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let f = Failure::usage(first.trim_start_matches("error: ").trim());
            eprintln!("{}", f.to_line());
            return ExitCode::from(f.kind.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(f) => {
            eprintln!("{}", f.to_line());
            ExitCode::from(f.kind.exit_code() as u8)
        }
    }
}
