//! Semi-synthetic simulation: fit a ground truth from a labeled customer
//! table, then let policies interact with contexts bootstrapped from it.
//!
//! ```bash
//! cargo run --release --example semi_synthetic
//! ```

use std::path::Path;

use hetbandit::env::{semi_synthetic_truth, Environment, SemiSyntheticConfig, SimulatedEnv, Table};
use hetbandit::policy::{run_policy, PolicyConfig, PolicyKind, PolicyState};

fn main() -> hetbandit::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/data/customers.csv");
    let table = Table::read(&path, b',')?;
    let roles = SemiSyntheticConfig {
        reward_column: "spend".into(),
        group_column: "segment".into(),
        group1_label: Some("loyal".into()),
        z_columns: vec!["z0".into(), "z1".into(), "z2".into()],
        arm_columns: (0..2)
            .map(|k| (0..4).map(|j| format!("a{k}_x{j}")).collect())
            .collect(),
        action_column: Some("offer".into()),
        min_rows_per_group: 100,
        lambda_mode: Default::default(),
        seed: 0,
    };
    let truth = semi_synthetic_truth(&table, &roles)?;
    let p = &truth.params;
    println!("fitted gating theta: {:.3}", p.theta());
    println!("fitted beta (loyal):  {:.3}", p.beta1());
    println!("fitted beta (casual): {:.3}", p.beta2());
    println!("fitted noise sd: {:.3}", p.sigma());

    let horizon = 1500;
    for kind in [
        PolicyKind::Hetero,
        PolicyKind::SingleLasso,
        PolicyKind::RegularOracle,
    ] {
        let mut env = SimulatedEnv::new(truth.clone(), 17);
        let state = PolicyState::new(kind, 100, env.truth(), PolicyConfig::default())?;
        let run = run_policy(&mut env, state, horizon, 17)?;
        println!(
            "{:>15}: average strong regret {:.3}, regular {:.3}",
            kind.name(),
            run.trace.strong_average(horizon),
            run.trace.regular_average(horizon)
        );
    }
    Ok(())
}
