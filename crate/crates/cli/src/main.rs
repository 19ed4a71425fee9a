//! `facekit`: blendshape weight solving, animation cleanup, quality
//! metrics, and emotion track processing behind one binary.
//!
//! Every failure prints a single machine-parsable line to stderr with an
//! `error[kind]:` prefix, and the exit code mirrors the kind: 2 for
//! unreadable or malformed inputs, 3 for inputs that parse but disagree
//! with each other, 4 for solver non-convergence.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use facekit_core::io::IoError;
use facekit_core::Error;

#[derive(Debug)]
pub enum CliError {
    /// A file or stream could not be read or did not parse. Exit 2.
    Parse(String),
    /// Inputs parsed individually but are mutually inconsistent. Exit 3.
    Shape(String),
    /// The solver ran out of iterations. Exit 4.
    Convergence(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Shape(_) => 3,
            CliError::Convergence(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Parse(msg) => write!(f, "error[parse]: {msg}"),
            CliError::Shape(msg) => write!(f, "error[shape]: {msg}"),
            CliError::Convergence(msg) => write!(f, "error[convergence]: {msg}"),
        }
    }
}

/// File-level problems (unreadable, malformed, internally invalid) are
/// all parse errors; cross-file consistency is checked by the commands.
impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Parse(e.to_string())
    }
}

fn contains_no_convergence(e: &Error) -> bool {
    match e {
        Error::NoConvergence { .. } => true,
        Error::Frame { source, .. } => contains_no_convergence(source),
        _ => false,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if contains_no_convergence(&e) {
            CliError::Convergence(e.to_string())
        } else {
            CliError::Shape(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(
    name = "facekit",
    version,
    about = "Blendshape weight solving, cleanup, and quality metrics for facial animation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit blendshape weights to a vertex animation.
    Solve(commands::SolveArgs),
    /// Apply strength scaling, smoothing, and channel offsets.
    Postprocess(commands::PostprocessArgs),
    /// Score an animation clip and write a metric report.
    Metrics(commands::MetricsArgs),
    /// Aggregate or stream-smooth emotion probabilities.
    Emotion(commands::EmotionArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(args) => commands::run_solve(args),
        Command::Postprocess(args) => commands::run_postprocess(args),
        Command::Metrics(args) => commands::run_metrics(args),
        Command::Emotion(args) => commands::run_emotion(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
