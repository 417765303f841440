//! Penalized logistic regression with fractional responses, the M-step for
//! the gating coefficients: responses are posterior group probabilities
//! rather than hard labels.
//!
//! ```bash
//! cargo run --release --example gating_logistic
//! ```

use hetbandit::model::sigmoid;
use hetbandit::rng::{self, streams};
use hetbandit::sparse::{
    cross_validate_lambda, default_grid, solve_penalized_logistic_traced, CvFamily,
    LogisticProblem, DEFAULT_FOLDS,
};
use ndarray::{array, Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> hetbandit::Result<()> {
    let (n, d) = (400, 10);
    let theta_true = array![1.5, -1.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0];
    let mut rng = rng::stream(3, streams::GATING);
    let z = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    // soft responsibilities: the true probabilities, as an ideal E-step would give
    let w: Array1<f64> = z.dot(&theta_true).mapv(sigmoid);

    let problem = LogisticProblem::new(z, w, 0.0)?;
    let grid = default_grid(CvFamily::Logistic(&problem));
    let lambda = cross_validate_lambda(CvFamily::Logistic(&problem), DEFAULT_FOLDS, &grid, 1)?;
    let problem = problem.with_lambda(lambda)?;
    let (theta, trace) =
        solve_penalized_logistic_traced(&problem, &Array1::zeros(d), 1e-8, 10_000)?;

    println!("lambda = {lambda:.5}, {} accepted steps", trace.len() - 1);
    println!(
        "objective {:.6} -> {:.6}",
        trace.first().copied().unwrap_or(f64::NAN),
        trace.last().copied().unwrap_or(f64::NAN)
    );
    println!("KKT violation: {:.2e}", problem.kkt_violation(&theta));
    println!("truth    {theta_true:.3}");
    println!("estimate {theta:.3}");
    Ok(())
}
