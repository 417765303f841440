//! Diagnostics for a simulated truth: gating boundedness, signal-to-noise
//! ratio and covariance eigenvalues, plus the estimation-rate probe that
//! tracks how the EM error shrinks as the sample size grows.
//!
//! ```bash
//! cargo run --release --example assumption_checks
//! ```

use hetbandit::em::EmConfig;
use hetbandit::env::{SimulatedEnv, SyntheticConfig};
use hetbandit::theory::{check_assumptions, rate_probe, Thresholds};

fn main() -> hetbandit::Result<()> {
    let config = SyntheticConfig {
        d: 100,
        d_z: 20,
        s: 5,
        theta_nnz: 5,
        l_bar: 8.0,
        ..SyntheticConfig::default()
    };
    let env = SimulatedEnv::synthetic(&config, 1)?;
    let report = check_assumptions(env.ground_truth(), 2000, Thresholds::default(), 1)?;
    print!("{}", report.to_csv());

    let points = rate_probe(&config, &[500, 1000, 2000], 5, 7, &EmConfig::default())?;
    println!("n,median_l2");
    for p in &points {
        println!("{},{:.4}", p.n, p.median_l2);
    }
    if let [first, .., last] = points.as_slice() {
        println!(
            "error ratio n={} / n={}: {:.3}",
            last.n,
            first.n,
            last.median_l2 / first.median_l2
        );
    }
    Ok(())
}
