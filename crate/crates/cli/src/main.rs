//! `orchestra`: configuration-driven pipeline for routing dialogue turns
//! between state-tracking experts.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orchestra_core::simulate::SimulationConfig;
use orchestra_core::workflow::SupervisionKind;

use crate::config::{Overrides, RouterKind, RunConfig};

#[derive(Parser)]
#[command(name = "orchestra", version, about = "Retrieval-routed dialogue state tracking pipeline")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// retrieval, oracle, cascade, classifier or constant:<expert>.
    #[arg(long, global = true)]
    router: Option<RouterKind>,
    /// none, task, expert or task+expert.
    #[arg(long, global = true)]
    supervision: Option<SupervisionKind>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Check the corpus and prediction files.
    Validate,
    /// Embed every hold-out and test turn, or check an imported store.
    Embed,
    /// Mine contrastive pairs and train the projection adapter.
    MineAndTrain,
    /// Build and sample the expert pools.
    BuildPools,
    /// Route the test corpus and write the run file.
    Route,
    /// Score the configured run and collect every run into a series.
    Report,
    /// Generate a synthetic corpus and run the whole pipeline on it.
    Simulate,
}

/// Command failure, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad or missing input (exit 1).
    Input(anyhow::Error),
    /// Internal invariant violation (exit 2).
    Internal(anyhow::Error),
}

impl Failure {
    pub fn context(self, msg: String) -> Self {
        match self {
            Failure::Input(e) => Failure::Input(e.context(msg)),
            Failure::Internal(e) => Failure::Internal(e.context(msg)),
        }
    }
}

fn is_internal(e: &orchestra_core::Error) -> bool {
    use orchestra_core::Error as E;
    match e {
        E::NonFinite { .. } | E::DimensionMismatch { .. } | E::TurnOutOfRange { .. } => true,
        E::ExpertFailure { source, .. } => is_internal(source),
        _ => false,
    }
}

impl From<orchestra_core::Error> for Failure {
    fn from(e: orchestra_core::Error) -> Self {
        if is_internal(&e) {
            Failure::Internal(e.into())
        } else {
            Failure::Input(e.into())
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<orchestra_core::Error>() {
            Ok(core) => core.into(),
            Err(e) => Failure::Input(e),
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Input)?,
        None if cli.command == Command::Simulate => RunConfig {
            simulation: Some(SimulationConfig::default()),
            ..RunConfig::default()
        },
        None => return Err(Failure::Input(anyhow::anyhow!("--config is required for this command"))),
    };
    config.apply(&Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        router: cli.router.clone(),
        supervision: cli.supervision,
    });
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let config = load_config(cli)?;
    match cli.command {
        Command::Validate => commands::validate(&config),
        Command::Embed => commands::embed(&config),
        Command::MineAndTrain => commands::mine_and_train(&config),
        Command::BuildPools => commands::build_pools(&config),
        Command::Route => commands::route(&config),
        Command::Report => commands::report(&config),
        Command::Simulate => commands::simulate(&config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ORCHESTRA_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use orchestra_core::Error;

    #[test]
    fn error_classes() {
        let internal = Error::NonFinite { what: "loss", epoch: 3 };
        assert!(matches!(Failure::from(internal), Failure::Internal(_)));
        let wrapped = Error::ExpertFailure {
            expert: "slm".into(),
            dialogue_id: "d".into(),
            turn_id: 0,
            source: Box::new(Error::MissingPrediction {
                expert: "slm".into(),
                key: "d:0".into(),
            }),
        };
        assert!(matches!(Failure::from(wrapped), Failure::Input(_)));
        let via_anyhow = anyhow::Error::from(Error::DimensionMismatch { expected: 2, actual: 3 });
        assert!(matches!(Failure::from(via_anyhow), Failure::Internal(_)));
        assert!(matches!(Failure::from(anyhow::anyhow!("bad path")), Failure::Input(_)));
    }
}
