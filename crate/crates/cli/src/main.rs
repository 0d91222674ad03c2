use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sain_core::harness::{run, Command, RunConfig};

#[derive(Parser)]
#[command(name = "sain", version, about = "Pushing dynamics: data, training, evaluation and reports")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the datasets listed under `generate`.
    GenData(Flags),
    /// Train the models listed under `train_models`.
    Train(Flags),
    /// Fine-tune checkpoints on `finetune_dataset`.
    FineTune(Flags),
    /// Score models on the test datasets at the configured horizon.
    EvalPred(Flags),
    /// Run planning episodes with each model.
    EvalControl(Flags),
    /// Merge prediction and control results into one report.
    Report(Flags),
}

#[derive(Args)]
struct Flags {
    /// JSON run configuration; relative paths inside it resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; only generation and evaluation accept more than one.
    #[arg(long)]
    threads: Option<usize>,
}

impl Cmd {
    fn split(self) -> (Command, Flags) {
        match self {
            Cmd::GenData(f) => (Command::GenData, f),
            Cmd::Train(f) => (Command::Train, f),
            Cmd::FineTune(f) => (Command::FineTune, f),
            Cmd::EvalPred(f) => (Command::EvalPred, f),
            Cmd::EvalControl(f) => (Command::EvalControl, f),
            Cmd::Report(f) => (Command::Report, f),
        }
    }
}

fn main() -> ExitCode {
    let (command, flags) = Cli::parse().command.split();
    let mut cfg = match &flags.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        },
        None => RunConfig::default(),
    };
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(o) = flags.out {
        // command-line paths are relative to the working directory
        cfg.out_dir = std::path::absolute(&o).unwrap_or(o);
    }
    if let Some(t) = flags.threads {
        cfg.threads = t;
    }
    let mut log = |m: &str| eprintln!("[{}] {m}", command.name());
    match run(command, &cfg, &mut log) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
