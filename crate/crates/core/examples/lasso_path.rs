//! Weighted LASSO: choose the penalty by cross-validation, solve by
//! coordinate descent and certify the solution with the KKT conditions.
//!
//! ```bash
//! cargo run --release --example lasso_path
//! ```

use hetbandit::rng::{self, streams};
use hetbandit::sparse::{
    cross_validate_lambda, default_grid, solve_weighted_lasso, CvFamily, WeightedLassoProblem,
    DEFAULT_FOLDS,
};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> hetbandit::Result<()> {
    let (n, d) = (200, 40);
    let mut rng = rng::stream(11, streams::TRUTH);
    let x = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    let mut beta_true = Array1::zeros(d);
    for (j, v) in [(0, 2.0), (3, -1.5), (7, 1.0)] {
        beta_true[j] = v;
    }
    let y = x.dot(&beta_true)
        + Array1::from_shape_fn(n, |_| 0.5 * rng.sample::<f64, _>(StandardNormal));
    // responsibilities from an E-step would go here; half the rows count fully
    let weights = Array1::from_shape_fn(n, |i| if i % 2 == 0 { 1.0 } else { 0.5 });

    let problem = WeightedLassoProblem::new(x, y, weights, 1.0, 0.0)?;
    let grid = default_grid(CvFamily::Lasso(&problem));
    let lambda = cross_validate_lambda(CvFamily::Lasso(&problem), DEFAULT_FOLDS, &grid, 5)?;
    println!(
        "lambda_max = {:.4}, cross-validated lambda = {lambda:.5}",
        problem.lambda_max()
    );

    let problem = problem.with_lambda(lambda)?;
    let beta = solve_weighted_lasso(&problem, &Array1::zeros(d), 1e-9, 10_000)?;
    println!("KKT violation: {:.2e}", problem.kkt_violation(&beta));
    println!("objective: {:.6}", problem.objective(&beta));
    println!("coordinate  truth  estimate");
    for j in 0..d {
        if beta[j] != 0.0 || beta_true[j] != 0.0 {
            println!("{j:>10}  {:>5.2}  {:>8.4}", beta_true[j], beta[j]);
        }
    }
    Ok(())
}
