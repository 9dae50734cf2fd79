use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use qlsync_cli::{error_record, exit_code, run_experiment, validate_spec, ExperimentConfig};
use qlsync_core::{Error, Result};

/// Worker threads for sample-level parallelism.
const THREADS_ENV: &str = "QLSYNC_THREADS";

#[derive(Parser)]
#[command(name = "qlsync", version, about = "Quantum-like network synchronization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in the config.
    Run(ConfigArgs),
    /// Report the spectral gap of one sampled resource.
    Validate(ConfigArgs),
    /// Compare spectral propagation with direct integration.
    OracleCheck(ConfigArgs),
    /// Compare the partial eigensolver with full diagonalization.
    PartialEigsCheck(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON experiment config.
    config: PathBuf,
    /// Field overrides, e.g. `--resource.n-g 16 --seed=3`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, experiment: Option<&str>) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(name) = experiment {
            overrides.push(format!("--experiment={name}"));
        }
        ExperimentConfig::load(&self.config, &overrides)
    }
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::param(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::param(format!("cannot start thread pool: {e}")))
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON values serialize"));
}

fn run(cli: Cli) -> Result<bool> {
    init_threads()?;
    let (args, forced) = match &cli.command {
        Command::Validate(args) => {
            let report = validate_spec(&args.load(None)?)?;
            print_json(&serde_json::to_value(report)?);
            return Ok(true);
        }
        Command::Run(args) => (args, None),
        Command::OracleCheck(args) => (args, Some("oracle_check")),
        Command::PartialEigsCheck(args) => (args, Some("partial_eigs_check")),
    };
    let cfg = args.load(forced)?;
    let manifest = run_experiment(&cfg)?;
    let passed = manifest.passed.unwrap_or(true);
    print_json(&json!({
        "experiment": manifest.experiment,
        "manifest": cfg.output_dir.join("manifest.json"),
        "passed": manifest.passed,
        "metrics": manifest.metrics,
        "wall_clock_seconds": manifest.wall_clock_seconds,
    }));
    Ok(passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
