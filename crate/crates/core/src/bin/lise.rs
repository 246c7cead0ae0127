//! Command-line driver: Monte Carlo simulation, structural analysis and the
//! analytic-SVD self-check.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lise::error::{LiseError, Result};
use lise::harness::{
    analysis_report, asvd_check, build_scenario, run_monte_carlo, write_artifacts, FilterKind,
    ScenarioConfig,
};

#[derive(Parser)]
#[command(
    name = "lise",
    version,
    about = "State and unknown-input estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Monte Carlo trials and write CSV and JSON results.
    Simulate(RunArgs),
    /// Print the frozen-time structural analysis of a scenario as JSON.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Time at which time-varying matrices are frozen (default: start time).
        #[arg(long)]
        time: Option<f64>,
    },
    /// Compare analytic SVD rates with finite differences on random matrices.
    AsvdCheck {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Settings shared by `simulate` and `analyze`. Flags override the file
/// given with `--config`.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_enum)]
    filter: Option<FilterKind>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    fd_dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::from_file(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(s) = &self.scenario {
            cfg.scenario = s.clone();
        }
        if let Some(f) = self.filter {
            cfg.filter = f;
        }
        if let Some(n) = self.trials {
            cfg.trials = n;
        }
        if self.dt.is_some() {
            cfg.dt = self.dt;
        }
        if self.fd_dt.is_some() {
            cfg.fd_dt = self.fd_dt;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| LiseError::Io(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.config()?;
            let run = run_monte_carlo(&cfg)?;
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let paths = write_artifacts(&run, &dir, cfg.write_trials)?;
            println!("{}", to_json(&run.report)?);
            eprintln!("wrote {} files to {}", paths.len(), dir.display());
        }
        Command::Analyze { run, time } => {
            let cfg = run.config()?;
            let sc = build_scenario(&cfg)?;
            let rep = analysis_report(&sc, time.unwrap_or(sc.t0))?;
            println!("{}", to_json(&rep)?);
        }
        Command::AsvdCheck { samples, seed } => {
            if samples == 0 {
                return Err(LiseError::Config("samples must be at least 1".into()));
            }
            let rep = asvd_check(samples, seed)?;
            println!("{}", to_json(&rep)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
