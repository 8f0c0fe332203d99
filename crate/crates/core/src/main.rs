use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mimo_ee::admission::admit_users;
use mimo_ee::channel::build_channel;
use mimo_ee::config::{ConfigError, ExperimentConfig};
use mimo_ee::experiment::{run_sweep, OUT_DIR_ENV};
use mimo_ee::solver::{solve_ee, SolverError};
use mimo_ee::validation::run_validation;

#[derive(Parser)]
#[command(name = "mimo-ee", version, about = "Energy-efficient power allocation for massive MIMO downlink")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Channel seed (solve, admit, validate) or master seed (sweep).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Maximise energy efficiency on one channel and print the result as JSON.
    Solve(Common),
    /// Run greedy admission on one channel and print the result as JSON.
    Admit(Common),
    /// Run a Monte-Carlo sweep and write a CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Output CSV; defaults to the config's output_path, then $MIMO_EE_OUT_DIR/sweep.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Trials per sweep point; overrides the config's num_trials.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Cross-check the solver and admission against brute-force oracles.
    Validate(Common),
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<mimo_ee::Error> for Failure {
    fn from(e: mimo_ee::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    Ok(match &common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    })
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("results serialise")
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve(common) => {
            let config = load(&common)?;
            let sys = &config.system;
            let seed = common.seed.unwrap_or(config.master_seed);
            let channel = build_channel(&sys.geometry, sys.num_antennas, sys.num_users, seed)?;
            match solve_ee(&channel, &sys.qos_spec()?, &sys.link_params()?, sys.max_power_w, &sys.solver) {
                Ok(r) => {
                    println!("{}", json(&r));
                    Ok(())
                }
                Err(SolverError::Model(e)) => Err(Failure::Config(e.to_string())),
                Err(e) => Err(Failure::Run(format!("{e}; try `mimo-ee admit`"))),
            }
        }
        Command::Admit(common) => {
            let config = load(&common)?;
            let sys = &config.system;
            let seed = common.seed.unwrap_or(config.master_seed);
            let channel = build_channel(&sys.geometry, sys.num_antennas, sys.num_users, seed)?;
            let r = admit_users(&channel, &sys.qos_spec()?, sys.max_power_w)?;
            println!("{}", json(&r));
            Ok(())
        }
        Command::Sweep { common, out, trials } => {
            let mut config = load(&common)?;
            if let Some(seed) = common.seed {
                config.master_seed = seed;
            }
            if let Some(n) = trials {
                config.num_trials = n;
            }
            let path = out.or(config.output_path.take()).unwrap_or_else(|| {
                std::env::var_os(OUT_DIR_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_default()
                    .join("sweep.csv")
            });
            config.output_path = Some(path.clone());
            config.validate()?;
            let rows = run_sweep(&config).map_err(|e| Failure::Run(e.to_string()))?;
            println!(
                "{:>14} {:>16} {:>12} {:>10} {:>10}",
                "sweep_value", "mean_ee_bit/J", "ci95", "admitted", "feasible"
            );
            for r in &rows {
                println!(
                    "{:>14.6e} {:>16.6e} {:>12.3e} {:>10.3} {:>10.3}",
                    r.sweep_value, r.mean_ee_bit_per_j, r.ci95_halfwidth, r.mean_admitted, r.feasibility_rate
                );
            }
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        Command::Validate(common) => {
            let config = load(&common)?;
            let report = run_validation(&config.system, common.seed.unwrap_or(config.master_seed))?;
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Run("validation failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
    }
}
