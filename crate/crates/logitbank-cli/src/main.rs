//! `logitbank`: calibrate, score, and diagnose bounded-score response
//! matrices under a continuous-response 2PL model.
//!
//! Exit codes: 0 success, 1 usage, 2 data validation, 3 numeric or
//! identifiability failure.

mod commands;
mod output;
mod reports;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use output::OutputFormat;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(logitbank::Error),
}

impl From<logitbank::Error> for CliError {
    fn from(e: logitbank::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(e) => match e {
                logitbank::Error::Domain(_)
                | logitbank::Error::Validation(_)
                | logitbank::Error::Lookup(_)
                | logitbank::Error::Parse(_)
                | logitbank::Error::Io { .. } => 2,
                logitbank::Error::Identifiability(_)
                | logitbank::Error::NoInformation(_)
                | logitbank::Error::UndefinedStatistic(_)
                | logitbank::Error::NumericFailure(_) => 3,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Lib(e) => e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "logitbank",
    version,
    about = "Continuous-response 2PL calibration, closed-form scoring, and bank diagnostics"
)]
struct Cli {
    /// Worker threads for parallel sections (0 = all cores). Results are
    /// identical at any thread count.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Machine-readable output format for --out files.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,

    #[command(subcommand)]
    command: Command,
}

/// Optimization flags shared by calibrate and lomo.
#[derive(Args, Debug, Clone)]
struct CalibrationFlags {
    /// Ridge strength on log-discrimination.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Ability-centering penalty strength.
    #[arg(long, default_value_t = 0.01)]
    mu: f64,
    /// Peak learning rate.
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 20_000)]
    max_steps: u32,
    /// Relative loss-change convergence tolerance (50-step window).
    #[arg(long, default_value_t = 1e-9)]
    rel_tol: f64,
    /// Seed recorded in the run configuration; all outputs are deterministic
    /// given inputs and seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Edge offset of the logit squeeze transform.
    #[arg(long, default_value_t = 1e-3)]
    squeeze_offset: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Jointly fit item parameters and abilities from a response matrix.
    Calibrate {
        /// Response matrix (JSONL).
        #[arg(long)]
        input: PathBuf,
        /// Bank file to write (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Optional abilities + fit statistics report.
        #[arg(long)]
        abilities: Option<PathBuf>,
        /// Override the bank version tag.
        #[arg(long)]
        version: Option<String>,
        #[command(flatten)]
        calibration: CalibrationFlags,
    },
    /// Score every examinee in a matrix against a frozen bank.
    Score {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Item filter, repeatable: split=public|private, tag=T,
        /// category=C, item=ID.
        #[arg(long)]
        slice: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Marginal ability gains between two score reports (JSON).
    Delta {
        /// Score report for the higher configuration.
        #[arg(long)]
        high: PathBuf,
        /// Score report for the lower configuration.
        #[arg(long)]
        low: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-model-out calibration trust check.
    Lomo {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        calibration: CalibrationFlags,
    },
    /// Per-epoch re-scoring against a frozen bank.
    EpochVariance {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Public/private split comparison with 2x standard-error flagging.
    Contamination {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ceiling and floor rates per examinee.
    Saturation {
        #[arg(long)]
        input: PathBuf,
        /// Closeness to 1.0 (or 0.0) that counts as saturated.
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Agreement statistics between two judge-score files.
    Agree {
        #[arg(long)]
        input_a: PathBuf,
        #[arg(long)]
        input_b: PathBuf,
        /// Binarization threshold for kappa and directional agreement.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Binarize with strict `>` instead of the default inclusive `>=`.
        #[arg(long)]
        exclusive: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Log-linear fit of token cost on item difficulty.
    TokenFit {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic response matrix from a generator spec.
    Synth {
        /// Generator spec (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Matrix file to write (JSONL).
        #[arg(long)]
        out: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Edge offset of the logit squeeze transform.
        #[arg(long, default_value_t = 1e-3)]
        squeeze_offset: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if cli.threads > 0 {
        // Parallel sections are deterministic regardless; the pool size only
        // affects wall time.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }

    match commands::run(cli.command, cli.format) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
