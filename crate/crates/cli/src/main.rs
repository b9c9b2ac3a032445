//! qnn-forge: dataset generation, training runs, derivative checks, and
//! trace replay for the gate-model QNN library.
//!
//! Exit codes: 0 success, 1 replay verification failure, 2 configuration
//! error, 3 numeric or runtime failure, 4 corrupt trace.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qnn_core::dataset::LabelRule;

use config::{ExperimentConfig, Mode};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Corrupt(String),
    #[error("verification failed:\n{0}")]
    Verify(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Corrupt(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "qnn-forge",
    about = "Training harness for gate-model QNNs with graph side networks",
    version
)]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset file (JSON); defaults to the full parity dataset for n.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset.
    GenData {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, value_enum, default_value = "parity")]
        rule: RuleArg,
        #[arg(long, default_value_t = 0)]
        gen_seed: u64,
    },
    /// Train the feed-forward algorithm.
    TrainQnn,
    /// Train the recurrent algorithm and record a replayable trace.
    TrainRqnn,
    /// Randomized derivative checks; writes gradcheck.json.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        cases: usize,
    },
    /// Closed-form second-derivative table for the configured ansatz.
    Hessian,
    /// Verify a recorded trace's bookkeeping bit-for-bit.
    Replay {
        /// Path to a trace.jsonl file.
        trace: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum RuleArg {
    Parity,
    Majority,
    Constant,
}

impl From<RuleArg> for LabelRule {
    fn from(r: RuleArg) -> LabelRule {
        match r {
            RuleArg::Parity => LabelRule::Parity,
            RuleArg::Majority => LabelRule::Majority,
            RuleArg::Constant => LabelRule::Constant,
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(raw) = std::env::var("QNN_FORGE_THREADS") {
        let threads: usize = raw.parse().map_err(|_| {
            CliError::Config(format!(
                "QNN_FORGE_THREADS must be a positive integer, got {raw:?}"
            ))
        })?;
        if threads == 0 {
            return Err(CliError::Config(
                "QNN_FORGE_THREADS must be a positive integer, got 0".into(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("cannot size worker pool: {e}")))?;
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this subcommand".into()))?;
    ExperimentConfig::load(path)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    init_threads()?;
    match &cli.command {
        Command::GenData {
            n,
            count,
            rule,
            gen_seed,
        } => {
            let seed = cli.seed.unwrap_or(*gen_seed);
            commands::cmd_gen_data(*n, *count, (*rule).into(), seed, &cli.out)
        }
        Command::TrainQnn => {
            let cfg = load_config(cli)?;
            let seed = cli.seed.unwrap_or(cfg.seed);
            commands::cmd_train(&cfg, Mode::Qnn, seed, cli.data.as_deref(), &cli.out)
        }
        Command::TrainRqnn => {
            let cfg = load_config(cli)?;
            let seed = cli.seed.unwrap_or(cfg.seed);
            commands::cmd_train(&cfg, Mode::Rqnn, seed, cli.data.as_deref(), &cli.out)
        }
        Command::Gradcheck { cases } => {
            let seed = match (&cli.seed, &cli.config) {
                (Some(s), _) => *s,
                (None, Some(_)) => load_config(cli)?.seed,
                (None, None) => 0,
            };
            commands::cmd_gradcheck(seed, *cases, &cli.out)
        }
        Command::Hessian => {
            let cfg = load_config(cli)?;
            let seed = cli.seed.unwrap_or(cfg.seed);
            commands::cmd_hessian(&cfg, seed, cli.data.as_deref(), &cli.out)
        }
        Command::Replay { trace } => commands::cmd_replay(trace),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
