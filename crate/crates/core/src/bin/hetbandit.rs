use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hetbandit::experiment::{
    emit_outputs, parse_config, run_experiment, EnvironmentFactory, RunOptions,
};
use hetbandit::theory::{check_assumptions, Thresholds};
use hetbandit::Error;

#[derive(Parser)]
#[command(
    name = "hetbandit",
    version,
    about = "Seeded latent-heterogeneity bandit experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (policy, replication) cell of a config and write the outputs.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config's `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (overrides the config's `jobs`).
        #[arg(long)]
        jobs: Option<usize>,
        /// Base seed (overrides the config's `base_seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate a config and print assumption diagnostics for its environment as CSV.
    Check {
        config: PathBuf,
        /// Rounds drawn for the diagnostics.
        #[arg(long, default_value_t = 2000)]
        probe: usize,
    },
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config { .. } => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            jobs,
            seed,
        } => {
            let mut cfg = match parse_config(&config) {
                Ok(c) => c,
                Err(e) => return exit_for(&e),
            };
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(j) = jobs {
                if j == 0 {
                    eprintln!("error: --jobs must be positive");
                    return ExitCode::from(1);
                }
                cfg.jobs = j;
            }
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("results"));
            eprintln!(
                "running {} policies x {} replications, horizon {}",
                cfg.policies.len(),
                cfg.replications,
                cfg.horizon
            );
            let options = RunOptions {
                jobs: cfg.jobs,
                progress: true,
            };
            let result = run_experiment(&cfg, options).and_then(|r| {
                if !r.paired() {
                    eprintln!("warning: policies of a replication saw different environment draws");
                }
                emit_outputs(&r, &dir)
            });
            match result {
                Ok(()) => {
                    eprintln!("wrote {}", dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => exit_for(&e),
            }
        }
        Command::Check { config, probe } => {
            let cfg = match parse_config(&config) {
                Ok(c) => c,
                Err(e) => return exit_for(&e),
            };
            let report = EnvironmentFactory::new(&cfg.environment)
                .and_then(|f| f.build(cfg.base_seed))
                .and_then(|env| {
                    check_assumptions(
                        env.ground_truth(),
                        probe,
                        Thresholds::default(),
                        cfg.base_seed,
                    )
                });
            match report {
                Ok(r) => {
                    print!("{}", r.to_csv());
                    ExitCode::SUCCESS
                }
                Err(e) => exit_for(&e),
            }
        }
    }
}
