//! Offline estimation: initialize from uniformly explored data, refine with
//! the sample-split regularized EM, and report the permutation-invariant error.
//!
//! ```bash
//! cargo run --release --example em_estimation
//! ```

use hetbandit::em::{em_fit, EmConfig};
use hetbandit::env::{Environment, SimulatedEnv, SyntheticConfig};
use hetbandit::init::{initialize, InitConfig};
use hetbandit::metrics::estimation_error;
use hetbandit::rng::{self, streams};
use hetbandit::Interaction;
use rand::Rng;

fn main() -> hetbandit::Result<()> {
    let config = SyntheticConfig {
        d: 60,
        d_z: 10,
        s: 5,
        theta_nnz: 5,
        l_bar: 5.0,
        ..SyntheticConfig::default()
    };
    let seed = 21;
    let mut env = SimulatedEnv::synthetic(&config, seed)?;
    let truth = env.truth().clone();
    let mut policy_rng = rng::stream(seed, streams::POLICY);
    let data: Vec<Interaction> = (0..1000)
        .map(|_| {
            let round = env.sample_round();
            let a = policy_rng.random_range(0..env.num_arms());
            Interaction::new(round.context, a, round.rewards[a], None)
        })
        .collect::<hetbandit::Result<_>>()?;

    let init = initialize(
        &data,
        &InitConfig {
            sigma: truth.sigma(),
            ..InitConfig::default()
        },
        seed,
    )?;
    let err0 = estimation_error(&init.params, &truth)?;
    println!("screened support: {} coordinates", init.support.len());
    println!(
        "initializer: l2 error {:.3}, l1 error {:.3}",
        err0.l2, err0.l1
    );

    for t_max in [1, 2] {
        let fit = em_fit(
            &data,
            &init.params,
            &EmConfig {
                t_max,
                ..EmConfig::default()
            },
        )?;
        let err = estimation_error(&fit.params, &truth)?;
        println!(
            "EM with {t_max} iteration(s): l2 error {:.3} (labels swapped: {}), lambdas {:?}",
            err.l2, err.swapped, fit.lambdas
        );
    }
    Ok(())
}
