//! The doubling episode schedule and one bandit run: episode lengths, the
//! refits at each boundary, and the per-episode regret of the hetero policy.
//!
//! ```bash
//! cargo run --release --example episode_schedule
//! ```

use hetbandit::env::{Environment, SimulatedEnv, SyntheticConfig};
use hetbandit::metrics::estimation_error;
use hetbandit::policy::{
    episode_length, max_episode, run_policy, PolicyConfig, PolicyKind, PolicyState,
};

fn main() -> hetbandit::Result<()> {
    let (n0, horizon) = (100, 1500);
    let last = max_episode(horizon, n0)?;
    print!("episode lengths:");
    for tau in 0..=last {
        print!(" {}", episode_length(tau, n0)?);
    }
    println!(" (last episode truncated at T = {horizon})");

    let config = SyntheticConfig {
        d: 50,
        d_z: 10,
        s: 5,
        theta_nnz: 5,
        l_bar: 5.0,
        ..SyntheticConfig::default()
    };
    let seed = 4;
    let mut env = SimulatedEnv::synthetic(&config, seed)?;
    let truth = env.truth().clone();
    let state = PolicyState::new(PolicyKind::Hetero, n0, &truth, PolicyConfig::default())?;
    let run = run_policy(&mut env, state, horizon, seed)?;

    println!("episode  fit rows   l2 error  mean strong  mean regular");
    for snap in &run.snapshots {
        let err = match &snap.params {
            Some(p) => format!("{:>8.3}", estimation_error(p, &truth)?.l2),
            None => "       -".to_string(),
        };
        let rows = snap
            .fit_range
            .as_ref()
            .map_or("-".to_string(), |r| format!("{}..{}", r.start, r.end));
        let (strong, regular) = run
            .trace
            .episode_means(snap.episode)
            .unwrap_or((f64::NAN, f64::NAN));
        println!(
            "{:>7}  {rows:>8}  {err}  {strong:>11.3}  {regular:>12.3}",
            snap.episode
        );
    }
    println!(
        "average regret at T: strong {:.3}, regular {:.3}",
        run.trace.strong_average(horizon),
        run.trace.regular_average(horizon)
    );
    Ok(())
}
