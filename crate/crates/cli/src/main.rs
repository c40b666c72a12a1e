//! `sl3d`: proposals, self-labeling, label export and evaluation.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 internal failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod data;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { code: 4, message: message.into() }
    }
}

#[derive(Parser)]
#[command(name = "sl3d", version, about = "Unsupervised 3D object discovery and recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    /// Config overrides as `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate object proposals for every scene in `scenes`.
    Propose(Common),
    /// Train the encoder with self-labeling on objects or proposals.
    Selflabel(Common),
    /// Label proposals with a trained checkpoint.
    ExportLabels(Common),
    /// Score predictions (task = cls|det|seg|knn|purity).
    Eval(Common),
    /// Supervised fine-tuning, optionally from a checkpoint.
    Finetune(Common),
    /// kNN accuracy on frozen embeddings.
    Knn(Common),
}

type Handler = fn(&config::PipelineConfig) -> Result<(), Failure>;

fn run(cli: Cli) -> Result<(), Failure> {
    let (common, f): (Common, Handler) = match cli.command {
        Command::Propose(c) => (c, commands::propose),
        Command::Selflabel(c) => (c, commands::selflabel),
        Command::ExportLabels(c) => (c, commands::export_labels),
        Command::Eval(c) => (c, commands::eval),
        Command::Finetune(c) => (c, commands::finetune_cmd),
        Command::Knn(c) => (c, commands::knn),
    };
    let config = config::resolve(common.config.as_deref(), &common.overrides, common.jobs)?;
    log::debug!("resolved configuration:\n{}", config.to_text());
    f(&config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
