mod commands;
mod config;
mod selfcheck;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Learned per-pixel color stylization.
#[derive(Debug, Parser)]
#[command(name = "semstyle", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StyleArg {
    Global,
    Local,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic before/after dataset.
    Gen {
        #[arg(long, value_enum, default_value = "global")]
        style: StyleArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of training images.
        #[arg(long, default_value_t = 20)]
        train: usize,
        /// Number of test images.
        #[arg(long, default_value_t = 10)]
        test: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network on a dataset's training split.
    Train {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Flat `key = value` config file; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Per-epoch loss log (defaults to the checkpoint path plus `.log`).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Stylize one PNG with a trained checkpoint.
    Apply {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Report mean per-pixel L2 error on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Tab-separated report (name, baseline, method).
        #[arg(long, default_value = "report.tsv")]
        report: PathBuf,
    },
    /// Run the built-in invariant checks.
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Check(String),
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Check(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
            CliError::Other(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<semstyle::Error> for CliError {
    fn from(e: semstyle::Error) -> Self {
        use semstyle::Error as E;
        match e {
            E::Config(_) => CliError::Config(e.to_string()),
            E::Io { .. } | E::Image { .. } | E::Checkpoint { .. } => CliError::Io(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen {
            style,
            seed,
            train,
            test,
            width,
            height,
            out,
        } => commands::gen(style, seed, train, test, width, height, &out),
        Command::Train {
            data,
            config,
            checkpoint,
            log,
            seed,
        } => commands::train(&data, config.as_deref(), &checkpoint, log, seed),
        Command::Apply {
            checkpoint,
            input,
            output,
        } => commands::apply(&checkpoint, &input, &output),
        Command::Eval {
            checkpoint,
            data,
            split,
            report,
        } => commands::eval(&checkpoint, &data, &split, &report),
        Command::Selfcheck { seed } => selfcheck::run(seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
