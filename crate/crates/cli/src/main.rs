//! `docbin`: train, apply, and score document binarization models.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 numeric
//! failure (non-finite loss during training).

mod augment;
mod baseline_cmd;
mod binarize;
mod evaluate;
mod manifest;
mod prepare;
mod train;

use clap::{Parser, Subcommand};
use docbin_core::CoreError;

#[derive(Debug)]
pub(crate) enum CliError {
    Usage(String),
    Core(CoreError),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> CliError {
        CliError::Core(e)
    }
}

pub(crate) type CliResult = Result<(), CliError>;

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser)]
#[command(
    name = "docbin",
    version,
    about = "Document image binarization: adversarial texture/binarization networks, \
             classical thresholds, and DIBCO-style metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cut image directories into a patch store for training
    Prepare(prepare::PrepareArgs),
    /// Run the staged training protocol on a patch store
    Train(train::TrainArgs),
    /// Synthesize degraded patches with a trained texture network
    Augment(augment::AugmentArgs),
    /// Binarize an image with a trained network
    Binarize(binarize::BinarizeArgs),
    /// Binarize an image with a classical thresholding method
    Baseline(baseline_cmd::BaselineArgs),
    /// Score predicted binarizations against ground truth
    Evaluate(evaluate::EvaluateArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and --version print to stdout and exit 0; real parse
            // errors go to stderr and exit 1.
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = dispatch(cli) {
        match e {
            CliError::Usage(msg) => {
                eprintln!("usage error: {msg}");
                std::process::exit(1);
            }
            CliError::Core(err) => {
                eprintln!("error: {err}");
                let code = if matches!(err, CoreError::NonFinite { .. }) {
                    3
                } else {
                    2
                };
                std::process::exit(code);
            }
        }
    }
}

fn dispatch(cli: Cli) -> CliResult {
    let threads = thread_cap()?;
    if threads > 1 {
        eprintln!("note: DOCBIN_THREADS={threads} accepted; this build executes on one core");
    }
    match cli.command {
        Command::Prepare(args) => prepare::run(args),
        Command::Train(args) => train::run(args),
        Command::Augment(args) => augment::run(args),
        Command::Binarize(args) => binarize::run(args),
        Command::Baseline(args) => baseline_cmd::run(args),
        Command::Evaluate(args) => evaluate::run(args),
    }
}

/// DOCBIN_THREADS is validated for forward compatibility even though
/// every kernel currently runs single-threaded.
fn thread_cap() -> Result<usize, CliError> {
    match std::env::var("DOCBIN_THREADS") {
        Err(_) => Ok(1),
        Ok(raw) => raw
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| {
                usage(format!(
                    "DOCBIN_THREADS must be a positive integer, got {raw:?}"
                ))
            }),
    }
}
