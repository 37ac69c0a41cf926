mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "autobct", version, about = "Budget-constrained Bayesian hyperparameter tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides AUTOBCT_SEED and the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for Monte Carlo loops (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Use every map level and stop after at most N calls.
    #[arg(long, global = true)]
    exact: bool,

    /// Maximum number of epochs.
    #[arg(long, global = true)]
    budget_guard: Option<usize>,

    /// Accept a map built for a different gamma.
    #[arg(long, global = true)]
    override_gamma: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build a value-function map by backward induction over a cloud of beliefs.
    BuildMap,
    /// Tune against the configured trainer using a prebuilt map.
    Run,
    /// Tune with on-the-fly nested Monte Carlo instead of a map.
    Otf,
    /// Print the metadata and level statistics of a saved map.
    Inspect { map: PathBuf },
    /// Run seeded episodes against an analytic trainer and summarise them.
    Simulate,
    /// Print an example trainer session of the wire protocol.
    Protocol,
}

fn load_config(cli: &Cli) -> autobct::Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| autobct::Error::Config("--config is required for this command".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Ok(s) = std::env::var("AUTOBCT_SEED") {
        cfg.seed = s
            .parse()
            .map_err(|_| autobct::Error::Config(format!("AUTOBCT_SEED is not an integer: {s:?}")))?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.output {
        cfg.output = Some(o.clone());
    }
    if let Some(g) = cli.budget_guard {
        cfg.budget_guard = g;
    }
    cfg.exact |= cli.exact;
    cfg.allow_gamma_override |= cli.override_gamma;
    cfg.resolve()
}

fn dispatch(cli: &Cli) -> autobct::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| autobct::Error::Config(e.to_string()))?;
    }
    match &cli.command {
        Command::Protocol => {
            print!("{}", autobct::oracle::protocol_transcript());
            Ok(())
        }
        Command::Inspect { map } => commands::inspect(map),
        Command::BuildMap => commands::build_map(&load_config(cli)?),
        Command::Run => commands::run(&load_config(cli)?),
        Command::Otf => commands::otf(&load_config(cli)?),
        Command::Simulate => commands::simulate(&load_config(cli)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
