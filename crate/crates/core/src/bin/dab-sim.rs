use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use aircomp_dab::experiments::{
    builtin_scenario, emit_csv, normalize_per_entry, run_scenario, ScenarioConfig,
    BUILTIN_SCENARIOS,
};
use aircomp_dab::Error;
use clap::{Args, Parser, Subcommand};

/// Monte Carlo simulator for decomposed aggregation beamforming.
#[derive(Parser)]
#[command(name = "dab-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write a CSV of mean MSE per sweep point and method.
    Run(RunArgs),
    /// List the builtin scenarios.
    ListScenarios,
}

#[derive(Args)]
struct RunArgs {
    /// Builtin scenario name.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    scenario: Option<String>,
    /// TOML scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the scenario's.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report MSE per payload entry instead of summed over entries.
    #[arg(long)]
    per_entry_mse: bool,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn run(args: RunArgs) -> aircomp_dab::Result<()> {
    let mut config = match (&args.scenario, &args.config) {
        (Some(name), _) => builtin_scenario(name)?,
        (None, Some(path)) => ScenarioConfig::load(path).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("{}: {io}", path.display())),
            other => other,
        })?,
        (None, None) => unreachable!("clap requires one of --scenario or --config"),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    config.validate()?;

    let mut rows = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| run_scenario(&config))?,
        None => run_scenario(&config)?,
    };
    if args.per_entry_mse {
        normalize_per_entry(&mut rows, config.dims.payload_dim);
    }
    match &args.out {
        Some(path) => emit_csv(&rows, BufWriter::new(File::create(path)?))?,
        None => emit_csv(&rows, io::stdout().lock())?,
    };
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::ListScenarios => {
            for name in BUILTIN_SCENARIOS {
                let cfg = builtin_scenario(name).expect("builtin scenario");
                println!(
                    "{name}\tN_r={}\tclusters={}\tsweep={}\tmethods={}",
                    cfg.geometry.n_rx,
                    cfg.clusters.len(),
                    cfg.sweep.name(),
                    cfg.methods
                        .iter()
                        .map(|m| m.name())
                        .collect::<Vec<_>>()
                        .join("|")
                );
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Io(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
