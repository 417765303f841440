//! The lower-bound construction: with an uninformative gating model even the
//! regular oracle, which knows every parameter but not the realized group,
//! pays regret at a constant rate, while the strong oracle pays none.
//!
//! ```bash
//! cargo run --release --example lower_bound
//! ```

use hetbandit::env::{lower_bound_env, Environment};
use hetbandit::metrics::bayes_risk;
use hetbandit::policy::{run_policy, PolicyConfig, PolicyKind, PolicyState};
use ndarray::array;

fn main() -> hetbandit::Result<()> {
    let (l_bar, x_bar, horizon) = (1.0, 1.0, 100_000);
    let seed = 8;
    for theta in [array![0.0], array![1.0], array![3.0]] {
        let env = lower_bound_env(l_bar, x_bar, theta.clone(), 2, 1.0, seed)?;
        let risk = bayes_risk(&theta, |rng| env.sample_gating(rng), 100_000, seed)?;
        print!(
            "theta = {:>3}: Bayes risk {risk:.4}, floor {:.4};",
            theta[0],
            l_bar * x_bar * risk
        );
        for kind in [PolicyKind::RegularOracle, PolicyKind::StrongOracle] {
            let mut env = lower_bound_env(l_bar, x_bar, theta.clone(), 2, 1.0, seed)?;
            let truth = env.truth().clone();
            let state = PolicyState::new(kind, 100, &truth, PolicyConfig::default())?;
            let run = run_policy(&mut env, state, horizon, seed)?;
            print!(
                "  {} average strong regret {:.4}",
                kind.name(),
                run.trace.strong_average(horizon)
            );
        }
        println!();
    }
    Ok(())
}
