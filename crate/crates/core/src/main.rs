use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use surrender_lab::lab::{self, ExperimentConfig, LabError, Overrides};

/// Simulate endowment portfolios, train surrender classifiers and evaluate them.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a portfolio and write raw, train and test datasets.
    Simulate(Common),
    /// Train the configured models on the simulated training data.
    Train(Common),
    /// Write metrics, yearly bands and p / p-hat exports for trained models.
    Evaluate(Common),
    /// Compare a model with and without each resampling scheme.
    BiasStudy(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated model roster, e.g. baseline,logistic,rf,gbt.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Resampling scheme (rus, ros, smote) or `none`.
    #[arg(long)]
    resample: Option<String>,
}

fn run(cli: Cli) -> Result<lab::RunManifest, LabError> {
    let (common, cmd): (&Common, fn(&ExperimentConfig) -> Result<lab::RunManifest, LabError>) = match &cli.command {
        Command::Simulate(c) => (c, lab::cmd_simulate),
        Command::Train(c) => (c, lab::cmd_train),
        Command::Evaluate(c) => (c, lab::cmd_evaluate),
        Command::BiasStudy(c) => (c, lab::cmd_bias_study),
    };
    let mut cfg = ExperimentConfig::load(&common.config)?;
    Overrides {
        seed: common.seed,
        out: common.out.clone(),
        models: common.models.clone(),
        resample: common.resample.clone(),
    }
    .apply(&mut cfg);
    cmd(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let summary = serde_json::json!({
                "status": "error",
                "kind": "usage",
                "message": e.kind().to_string(),
                "detail": e.to_string().trim(),
            });
            eprintln!("{summary}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(m) => {
            let files: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
            let ok = serde_json::json!({
                "status": "ok",
                "command": m.command,
                "files": files,
                "failures": m.failures,
            });
            println!("{ok}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.summary()).expect("summary serializes"));
            ExitCode::from(match e {
                LabError::Config { .. } => 2,
                _ => 1,
            })
        }
    }
}
