//! The two-group model: gating probabilities, posterior group weights after
//! observing a reward, the Bayes group classifier and greedy arm choice.
//!
//! ```bash
//! cargo run --example posterior_weights
//! ```

use hetbandit::model::{classify, greedy_arm, group_probability, posterior_weight};
use hetbandit::{Context, ModelParams};
use ndarray::array;

fn main() -> hetbandit::Result<()> {
    let params = ModelParams::new(
        array![2.0, -1.0],
        array![1.0, 0.0, 0.5],
        array![-1.0, 1.0, 0.0],
        0.5,
    )?;
    let context = Context::from_rows(
        vec![0.3, 0.2],
        vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ],
    )?;
    let prior = group_probability(context.z().view(), params.theta().view())?;
    let group = classify(context.z().view(), params.theta().view())?;
    println!("prior P(group 1 | z) = {prior:.4}, Bayes group = {group:?}");
    let arm = greedy_arm(&context, params.beta(group).view());
    println!("greedy arm under the Bayes group: {arm}");

    // a reward reveals the group: compare likelihoods under both betas
    for y in [-1.0, 0.0, 0.5, 1.0, 2.0] {
        let w = posterior_weight(y, context.arm(0), context.z().view(), &params)?;
        let w_swapped = posterior_weight(y, context.arm(0), context.z().view(), &params.swapped())?;
        println!(
            "reward {y:>4} on arm 0: P(group 1 | y) = {w:.6}  (relabeled: {:.6})",
            1.0 - w_swapped
        );
    }
    Ok(())
}
