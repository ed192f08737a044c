use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pgrom_cli::pipeline::stage_name;
use pgrom_cli::{CliError, Pipeline, PipelineConfig, ValidConfig};

#[derive(Debug, Parser)]
#[command(name = "pgrom", version, about = "Train and compare projection-based reduced order models")]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restrict to these strategies (repeatable); overrides the configuration.
    #[arg(long = "strategy", global = true)]
    strategies: Vec<String>,
    /// Recorded in the manifests; the pipeline itself draws no random numbers.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every stage, skipping those that are up to date.
    Run,
    /// Run one stage; its upstream artifacts must exist.
    Stage { name: String },
    /// Check the configuration and exit.
    Validate,
    /// Show each stage's status and recorded outputs.
    ListArtifacts,
}

fn load(cli: &Cli) -> Result<ValidConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation(vec!["--config: a configuration file is required".into()]))?;
    Ok(PipelineConfig::load(path)?
        .validate()?
        .with_strategies(&cli.strategies)?
        .with_output_dir(cli.out.clone()))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    match &cli.command {
        Command::Validate => {
            println!(
                "ok: {} training and {} test parameters, strategies {}",
                cfg.training.len(),
                cfg.testing.len(),
                cfg.strategies.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ")
            );
        }
        Command::Run => {
            let pipeline = Pipeline::new(cfg, cli.seed)?;
            pipeline.run_all()?;
            println!("{}", pipeline.store().path("compare/comparison.csv").display());
        }
        Command::Stage { name } => {
            let stage = stage_name(name)?;
            Pipeline::new(cfg, cli.seed)?.run_stage(stage, false)?;
        }
        Command::ListArtifacts => print!("{}", Pipeline::new(cfg, cli.seed)?.list_artifacts()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
