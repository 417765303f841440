//! A full paired experiment from a config file: every policy and replication,
//! the long results table, the per-round summary and the SVG charts.
//!
//! ```bash
//! cargo run --release --example run_experiment -- configs/quick.json /tmp/quick
//! ```

use std::path::PathBuf;

use hetbandit::experiment::{emit_outputs, parse_config, run_experiment, summarize, RunOptions};

fn main() -> hetbandit::Result<()> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let config_path = args
        .next()
        .map_or_else(|| root.join("configs/quick.json"), PathBuf::from);
    let out = args.next().map_or_else(
        || std::env::temp_dir().join("hetbandit-quick"),
        PathBuf::from,
    );

    let config = parse_config(&config_path)?;
    let results = run_experiment(
        &config,
        RunOptions {
            jobs: config.jobs,
            progress: true,
        },
    )?;
    println!(
        "paired environment draws across policies: {}",
        results.paired()
    );

    let summary = summarize(&results.table());
    println!(
        "policy            strong avg (se)     regular avg (se)   at round {}",
        config.horizon
    );
    for row in summary.iter().filter(|r| r.round == config.horizon) {
        println!(
            "{:<16} {:>8.3} ({:.3})   {:>8.3} ({:.3})",
            row.policy,
            row.strong_avg_mean,
            row.strong_avg_se,
            row.regular_avg_mean,
            row.regular_avg_se
        );
    }
    emit_outputs(&results, &out)?;
    println!(
        "wrote results.csv, summary.csv, episodes.csv, regret.svg, error.svg to {}",
        out.display()
    );
    Ok(())
}
