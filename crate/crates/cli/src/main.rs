//! `geonet`: runs the geodesic-net laboratory from a TOML config and writes JSON, CSV and
//! SVG artifacts with a reproducibility manifest.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 numeric failure, 3 validation failure.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use commands::{Command, Context};
use config::{parse_config, ToleranceConfig};
use error::CliError;
use output::{Artifacts, Inputs};

#[derive(Debug, Parser)]
#[command(name = "geonet", version, about = "Stationary geodesic nets, instability certificates and min-max sweepouts")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; defaults to the config's `out`, then $GEONET_OUT, then ./geonet-out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long = "tol-ode", global = true)]
    tol_ode: Option<f64>,

    #[arg(long = "tol-bvp", global = true)]
    tol_bvp: Option<f64>,

    #[arg(long = "tol-stationarity", global = true)]
    tol_stationarity: Option<f64>,

    #[arg(long = "tol-eig", global = true)]
    tol_eig: Option<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Usage("--config <FILE> is required".into()))?;
    let mut inputs = Inputs::default();
    let text = inputs.read(&config_path)?;
    let config = parse_config(&text, &config_path)?;

    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }

    let base = config_path.parent().map(PathBuf::from).unwrap_or_default();
    let out_dir = cli
        .out
        .or_else(|| config.out.as_ref().map(|p| base.join(p)))
        .or_else(|| std::env::var_os("GEONET_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("geonet-out"));
    let tolerances = config.tolerances.overlay(ToleranceConfig {
        ode: cli.tol_ode,
        bvp: cli.tol_bvp,
        stationarity: cli.tol_stationarity,
        eig: cli.tol_eig,
    });
    let seed = cli.seed.or(config.seed).unwrap_or(0);

    let mut cx = Context {
        config,
        base,
        seed,
        tolerances,
        inputs,
    };
    let mut artifacts = Artifacts::create(&out_dir)?;
    let result = commands::run(cli.command, &mut cx, &mut artifacts);
    let run = json!({
        "config": config_path.file_name().map(|n| n.to_string_lossy().into_owned()),
        "seed": seed,
        "threads": cli.threads,
        "tolerances": tolerances,
        "status": result.as_ref().map_or_else(|e| e.exit_code(), |_| 0),
    });
    artifacts.manifest(cli.command.name(), run, &cx.inputs)?;
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("geonet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
