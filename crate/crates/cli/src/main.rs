//! Command-line front end for the chaos-synchronization experiments.
//!
//! Each experiment name selects a preset operating point; a key=value config
//! file and a handful of flags layer overrides on top. Exit codes: 0 on
//! success, 2 for configuration problems, 3 when the simulation or artifact
//! writing fails, 4 when --self-test finds the documented expectation
//! violated.

mod config;
mod experiments;

use clap::Parser;
use config::{Experiment, ExperimentConfig};
use experiments::RunError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "chaoscomm",
    version,
    about = "Chaos-synchronization spread-spectrum experiments",
    long_about = "Runs one of the canned experiments (sync, fhss, fhss-noise, fhss-smooth, \
                  dsss, dsss-noise, ber-sweep, psd) and drops CSV artifacts plus a run.meta \
                  file into the output directory. Every run is deterministic: the same \
                  config and seed reproduce the artifacts byte for byte."
)]
struct Cli {
    /// Experiment to run
    #[arg(value_enum)]
    experiment: Experiment,

    /// key = value config file layered over the experiment preset
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed override
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Divide the trace length and hop hold by K for a quick shortened run
    #[arg(long, value_name = "K")]
    scale: Option<u64>,

    /// Output directory [default: $CHAOSCOMM_OUT, else ./out]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// After the run, check the expectation the experiment demonstrates
    /// (documented per preset) and exit 4 when it does not hold
    #[arg(long)]
    self_test: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cli: Cli) -> Result<String, RunError> {
    let mut cfg = ExperimentConfig::preset(cli.experiment);
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_file(&text).map_err(RunError::Config)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let scale = cli.scale.unwrap_or(1);
    if scale != 1 {
        cfg.apply_scale(scale).map_err(RunError::Config)?;
    }
    let base = cli
        .out
        .or_else(|| cfg.out_dir.clone().map(PathBuf::from))
        .or_else(|| std::env::var_os("CHAOSCOMM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let dir = base.join(cli.experiment.name());
    let summary = experiments::run(cli.experiment, &cfg, &dir, cli.self_test, scale)?;
    Ok(format!("{summary}\nartifacts in {}", dir.display()))
}
