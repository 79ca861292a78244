mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::exit::CliError;

#[derive(Debug, Parser)]
#[command(name = "mcgtta", version, about = "Prompt-network test-time adaptation on a toy audio-language model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every experiment command. Flags override the config file.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat TOML config file; unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; independent cells run in parallel when above 1.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// episodic or online
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Optimization steps per batch.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub n_views: Option<usize>,
    /// Domain shift such as `noise:5+tilt:-3`.
    #[arg(long)]
    pub shift: Option<String>,
    /// Any config key, as `key=value` with a TOML value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic data, pretrain the toy model and write its checkpoint.
    Pretrain(Common),
    /// Write the shifted synthetic test set as a dataset directory.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Leave labels out of the manifest.
        #[arg(long)]
        no_labels: bool,
    },
    /// Adapt the prompt networks on a dataset directory.
    Adapt(Common),
    /// Run the 40-cell ablation matrix on a labeled dataset directory.
    Ablate(Common),
    /// Adapt on each shift and evaluate on every shift.
    Crossdomain(Common),
    /// Merge run CSVs into per-configuration means over seeds.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Finite-difference check of the adaptation gradient.
    CheckGrad {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Pretrain(c) => commands::pretrain(&c),
        Command::Generate { common, no_labels } => commands::generate(&common, no_labels),
        Command::Adapt(c) => commands::adapt(&c),
        Command::Ablate(c) => commands::ablate(&c),
        Command::Crossdomain(c) => commands::crossdomain(&c),
        Command::Report { out, inputs } => commands::report(&inputs, &out),
        Command::CheckGrad { instances, seed } => commands::check_grad(instances, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code as u8)
        }
    }
}
