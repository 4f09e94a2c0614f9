use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use ttf_ops::{run, Command, OpsError, Options, PipelineConfig};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Generate,
    Train,
    Approve,
    Predict,
    Evaluate,
    Ablate,
    Monitor,
    Rollback,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Generate => Command::Generate,
            Cmd::Train => Command::Train,
            Cmd::Approve => Command::Approve,
            Cmd::Predict => Command::Predict,
            Cmd::Evaluate => Command::Evaluate,
            Cmd::Ablate => Command::Ablate,
            Cmd::Monitor => Command::Monitor,
            Cmd::Rollback => Command::Rollback,
        }
    }
}

/// Channel-level LTV forecasting pipeline.
#[derive(Debug, Parser)]
#[command(name = "ttf", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Pipeline configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset_version: Option<String>,
    /// Model to use; `rollback` and `approve` take their target here.
    #[arg(long)]
    model_version: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hub root directory.
    #[arg(long, default_value = "ttf-hub")]
    out: PathBuf,
    /// Prediction batch id for `evaluate`.
    #[arg(long)]
    batch: Option<String>,
    /// Simulated days for `monitor`.
    #[arg(long, default_value_t = 1)]
    advance_days: usize,
    /// Added to each realized MAPE_p point during `monitor`.
    #[arg(long, default_value_t = 0.0)]
    inject_mape_p: f64,
}

fn execute(cli: Cli) -> Result<serde_json::Value, OpsError> {
    let config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let opts = Options {
        config,
        out: cli.out,
        dataset_version: cli.dataset_version,
        model_version: cli.model_version,
        seed: cli.seed,
        batch: cli.batch,
        advance_days: cli.advance_days,
        inject_mape_p: cli.inject_mape_p,
    };
    run(cli.command.into(), &opts)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(value) => {
            let text = serde_json::to_string_pretty(&value).expect("json output");
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::FAILURE
        }
    }
}
