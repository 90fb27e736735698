//! The `sparsetext` command line.
//!
//! Subcommands: `train`, `generate`, `eval`, `sweep`, `curves`. Exit codes
//! are 0 on success, 1 on runtime failures and 2 on usage or validation
//! errors. See [`formats`] for the file layouts.

pub mod commands;
pub mod formats;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::error::Error;
use crate::sampling::Strategy;
use crate::tinylm::TokenizerMode;

pub use commands::{
    cmd_curves, cmd_eval, cmd_generate, cmd_sweep, cmd_train, GenerateOutput, TrainSummary,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub(crate) fn format(path: &Path, msg: impl Into<String>) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(Error::InvalidParameter { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sparsetext",
    version,
    about = "Sparse decoding, entmax training and sparse-LM metrics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the feedforward language model with an entmax loss.
    Train(TrainArgs),
    /// Generate text from a checkpoint.
    Generate(GenerateArgs),
    /// Evaluate a decoding strategy on logit records or a checkpoint + corpus.
    Eval(EvalArgs),
    /// Evaluate a strategy over a grid of parameter values (CSV).
    Sweep(SweepArgs),
    /// Emit metric comparison curves as CSV.
    Curves(CurvesArgs),
}

/// Decoding strategy flags shared by several subcommands.
#[derive(Debug, Clone, Args)]
pub struct StrategyArgs {
    /// greedy | softmax | temperature | topk | nucleus | entmax
    #[arg(long, default_value = "softmax")]
    pub strategy: String,
    /// α for entmax
    #[arg(long)]
    pub alpha: Option<f64>,
    /// k for topk
    #[arg(long = "top-k")]
    pub top_k: Option<usize>,
    /// P for nucleus
    #[arg(long = "top-p")]
    pub top_p: Option<f64>,
    /// τ for temperature
    #[arg(long)]
    pub temperature: Option<f64>,
}

impl StrategyArgs {
    pub fn resolve(&self) -> Result<Strategy, CliError> {
        let param = match self.strategy.as_str() {
            "temperature" => self.temperature,
            "topk" => self.top_k.map(|k| k as f64),
            "nucleus" => self.top_p,
            "entmax" => self.alpha,
            _ => None,
        };
        Strategy::from_parts(&self.strategy, param).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// UTF-8 training corpus, one sentence per line
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "whitespace")]
    pub tokenizer: TokenizerMode,
    /// Entmax loss parameter (1 = negative log-likelihood)
    #[arg(long, default_value_t = 1.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3)]
    pub context: usize,
    #[arg(long = "embed-dim", default_value_t = 16)]
    pub embed_dim: usize,
    #[arg(long = "hidden-dim", default_value_t = 64)]
    pub hidden_dim: usize,
    #[arg(long = "learning-rate", default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long = "batch-size", default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint path; the manifest goes to `<out>.manifest.json`
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Context text
    #[arg(long, default_value = "")]
    pub prompt: String,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "max-len", default_value_t = 50)]
    pub max_len: usize,
    /// Support-size sidecar (one integer per generated token)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Logit record file (`<gold>\t<scores...>` per line)
    #[arg(long, conflicts_with_all = ["checkpoint", "corpus"])]
    pub records: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, requires = "checkpoint")]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    /// Repetition windows
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 128, 512])]
    pub windows: Vec<usize>,
    /// Fixed ε for ε-perplexity instead of the tuned one
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Expected vocabulary size; checked against the input
    #[arg(long = "vocab-size")]
    pub vocab_size: Option<usize>,
    /// Seed for the decoded tokens that feed rep/wrep/distinct-n
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the scores as a logit record file (checkpoint input only)
    #[arg(long = "dump-records", requires = "checkpoint")]
    pub dump_records: Option<PathBuf>,
    /// Report path; the manifest goes to `<out>.manifest.json`
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// temperature | topk | nucleus | entmax
    #[arg(long)]
    pub strategy: String,
    /// Parameter values; defaults to the usual grid for the strategy
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 128, 512])]
    pub windows: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path; the manifest goes to `<out>.manifest.json`
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CurvesArgs {
    /// ε values, one curve each
    #[arg(long, value_delimiter = ',', default_values_t = [0.01f64, 0.0])]
    pub epsilon: Vec<f64>,
    /// Number of gold-probability points in [0, 1]
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long = "vocab-size", default_value_t = 50_000)]
    pub vocab_size: usize,
    /// CSV path (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs a parsed command; returns what should go to stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Train(args) => {
            let summary = cmd_train(&args)?;
            Ok(format!(
                "wrote {} (final epoch loss {})\n",
                args.out.display(),
                summary.epoch_losses.last().copied().unwrap_or(f64::NAN)
            ))
        }
        Command::Generate(args) => Ok(cmd_generate(&args)?.text),
        Command::Eval(args) => {
            cmd_eval(&args)?;
            Ok(format!("wrote {}\n", args.out.display()))
        }
        Command::Sweep(args) => {
            cmd_sweep(&args)?;
            Ok(format!("wrote {}\n", args.out.display()))
        }
        Command::Curves(args) => {
            let csv = cmd_curves(&args)?;
            Ok(if args.out.is_some() {
                String::new()
            } else {
                csv
            })
        }
    }
}

/// Parses `args`, runs, prints, and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
