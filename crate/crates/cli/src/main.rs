use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod bench;
mod chat;
mod config;
mod datagen;
mod judge;

#[derive(Parser)]
#[command(name = "voxkit", version, about = "Think-before-speak agent runtime")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Interactive text session; one turn per input line.
    Chat(ChatArgs),
    /// Score a JSON-lines corpus of target/output pairs.
    Judge(JudgeArgs),
    /// Latency sweep and scaling comparison under a virtual clock.
    Bench(BenchArgs),
    /// Reasoning-trace pipeline stages.
    Datagen(DatagenArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Scripted,
    Http,
}

#[derive(clap::Args)]
pub struct ChatArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BackendKind::Scripted)]
    pub backend: BackendKind,
    /// Global tool pool (JSON array of tool specs).
    #[arg(long)]
    pub pool: PathBuf,
    /// JSON-lines script for the scripted backend.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// JSON map of tool name to queued results.
    #[arg(long)]
    pub tool_results: Option<PathBuf>,
    /// Print reasoning traces.
    #[arg(long)]
    pub show_think: bool,
    /// Write the session transcript here on exit.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct JudgeArgs {
    /// JSON-lines corpus of {capability, target, output} items.
    pub corpus: PathBuf,
    /// Verdict lines, one per item.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Corpus metrics as JSON.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct BenchArgs {
    /// Comma-separated pool sizes.
    #[arg(long, value_delimiter = ',', default_values_t = voxkit_core::bench::DEFAULT_SWEEP_SIZES)]
    pub sizes: Vec<usize>,
    /// JSON delay model; defaults apply to missing fields.
    #[arg(long, conflicts_with = "point_fit")]
    pub delay_model: Option<PathBuf>,
    /// Interpolate proposer delays through the reference measurements.
    #[arg(long)]
    pub point_fit: bool,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    /// Output directory for CSV, JSON and plot data.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also run the single-agent scaling comparison.
    #[arg(long)]
    pub scaling: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Cot,
    Necessity,
    Compose,
}

#[derive(clap::Args)]
pub struct DatagenArgs {
    /// JSON-lines input: corpus records, or sample metadata for compose.
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub stage: Stage,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Tool:general duration ratio for compose, e.g. 1:0.5.
    #[arg(long)]
    pub ratio: Option<String>,
    #[arg(long)]
    pub concurrency: Option<usize>,
}

/// Exit 2 for usage and config problems, 1 for everything else.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn runtime(e: impl fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }

    pub fn usage(e: impl fmt::Display) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(Failure::runtime)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Chat(args) => runtime().and_then(|rt| rt.block_on(chat::run(args))),
        Command::Judge(args) => judge::run(args),
        Command::Bench(args) => bench::run(args),
        Command::Datagen(args) => runtime().and_then(|rt| rt.block_on(datagen::run(args))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("voxkit: {e}");
            ExitCode::from(e.code())
        }
    }
}
