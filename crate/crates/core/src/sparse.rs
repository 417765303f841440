//! l1-penalized convex solvers used by the M-step.
//!
//! Weighted LASSO:
//!
//! ```text
//! F(b) = 1/(2 n sigma^2) * sum_i w_i (y_i - x_i . b)^2 + lambda * |b|_1
//! ```
//!
//! solved by cyclic coordinate descent on the weighted Gram matrix, and
//! fractional-response logistic regression:
//!
//! ```text
//! F(t) = -1/n * sum_i [w_i log p(z_i . t) + (1 - w_i) log(1 - p(z_i . t))] + lambda * |t|_1
//! ```
//!
//! solved by proximal gradient with a halving line search. Neither solver fits
//! an intercept.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};

use crate::rng::{self, streams};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const ARMIJO_CONSTANT: f64 = 1e-4;

/// `sign(v) * max(|v| - t, 0)`.
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

fn l1(v: &Array1<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Largest violation of the l1 stationarity conditions given the gradient of
/// the smooth part.
pub fn kkt_violation(beta: &Array1<f64>, smooth_grad: &Array1<f64>, lambda: f64) -> f64 {
    beta.iter()
        .zip(smooth_grad.iter())
        .map(|(&b, &g)| {
            if b != 0.0 {
                (g + lambda * b.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("tolerance must be positive, got {tol}")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!(
            "lambda must be nonnegative, got {lambda}"
        )))
    }
}

fn check_init(init: &Array1<f64>, d: usize) -> Result<()> {
    if init.len() != d {
        return Err(Error::dim("initial iterate", d, init.len()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Weighted LASSO
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct WeightedLassoProblem {
    design: Array2<f64>,
    response: Array1<f64>,
    weights: Array1<f64>,
    sigma: f64,
    lambda: f64,
}

impl WeightedLassoProblem {
    pub fn new(
        design: Array2<f64>,
        response: Array1<f64>,
        weights: Array1<f64>,
        sigma: f64,
        lambda: f64,
    ) -> Result<Self> {
        let n = design.nrows();
        if n == 0 {
            return Err(Error::arg("weighted LASSO needs at least one row"));
        }
        if response.len() != n {
            return Err(Error::dim("response", n, response.len()));
        }
        if weights.len() != n {
            return Err(Error::dim("weights", n, weights.len()));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::arg("weights must lie in [0, 1]"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::arg(format!("sigma must be positive, got {sigma}")));
        }
        check_lambda(lambda)?;
        Ok(Self {
            design,
            response,
            weights,
            sigma,
            lambda,
        })
    }

    pub fn design(&self) -> &Array2<f64> {
        &self.design
    }

    pub fn response(&self) -> &Array1<f64> {
        &self.response
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        self.lambda = lambda;
        Ok(self)
    }

    fn scale(&self) -> f64 {
        1.0 / (self.design.nrows() as f64 * self.sigma * self.sigma)
    }

    pub fn objective(&self, beta: &Array1<f64>) -> f64 {
        let resid = &self.response - &self.design.dot(beta);
        let sse: f64 = resid
            .iter()
            .zip(self.weights.iter())
            .map(|(r, w)| w * r * r)
            .sum();
        0.5 * self.scale() * sse + self.lambda * l1(beta)
    }

    /// Gradient of the quadratic part, computed directly from the data.
    pub fn smooth_gradient(&self, beta: &Array1<f64>) -> Array1<f64> {
        let resid = &self.response - &self.design.dot(beta);
        let wr = &resid * &self.weights;
        self.design.t().dot(&wr) * (-self.scale())
    }

    pub fn kkt_violation(&self, beta: &Array1<f64>) -> f64 {
        kkt_violation(beta, &self.smooth_gradient(beta), self.lambda)
    }

    /// `max_j |1/(n sigma^2) sum_i w_i x_ij y_i|`, the smallest lambda with a zero solution.
    pub fn lambda_max(&self) -> f64 {
        let wy = &self.response * &self.weights;
        self.design
            .t()
            .dot(&wy)
            .iter()
            .map(|v| (v * self.scale()).abs())
            .fold(0.0, f64::max)
    }
}

/// Sufficient statistics of a weighted least-squares problem.
///
/// Everything the coordinate-descent solver and the held-out loss need is a
/// function of `X^T W X`, `X^T W y`, `y^T W y` and the row count, so folds can
/// be handled by subtracting statistics instead of copying data.
#[derive(Debug, Clone)]
pub(crate) struct LassoGram {
    xtwx: Array2<f64>,
    xtwy: Array1<f64>,
    ytwy: f64,
    weight_sum: f64,
    rows: usize,
}

impl LassoGram {
    pub(crate) fn from_data(
        design: ArrayView2<'_, f64>,
        response: ArrayView1<'_, f64>,
        weights: ArrayView1<'_, f64>,
    ) -> Self {
        let sqrt_w = weights.mapv(f64::sqrt);
        let scaled = &design * &sqrt_w.view().insert_axis(Axis(1));
        let xtwx = scaled.t().dot(&scaled);
        let wy = &response * &weights;
        let xtwy = design.t().dot(&wy);
        let ytwy = wy.dot(&response);
        Self {
            xtwx,
            xtwy,
            ytwy,
            weight_sum: weights.sum(),
            rows: design.nrows(),
        }
    }

    fn plus(&self, other: &LassoGram) -> LassoGram {
        LassoGram {
            xtwx: &self.xtwx + &other.xtwx,
            xtwy: &self.xtwy + &other.xtwy,
            ytwy: self.ytwy + other.ytwy,
            weight_sum: self.weight_sum + other.weight_sum,
            rows: self.rows + other.rows,
        }
    }

    /// `sum_i w_i (y_i - x_i . beta)^2`.
    fn weighted_sse(&self, beta: &Array1<f64>) -> f64 {
        let quad = beta.dot(&self.xtwx.dot(beta));
        (quad - 2.0 * beta.dot(&self.xtwy) + self.ytwy).max(0.0)
    }

    pub(crate) fn solve(
        &self,
        sigma: f64,
        lambda: f64,
        init: &Array1<f64>,
        opts: SolverOptions,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<Array1<f64>> {
        let d = self.xtwy.len();
        check_init(init, d)?;
        if self.rows == 0 || self.weight_sum <= 0.0 {
            return Err(Error::Degenerate(
                "weighted LASSO with zero total weight".into(),
            ));
        }
        let scale = 1.0 / (self.rows as f64 * sigma * sigma);
        let gram = &self.xtwx * scale;
        let b = &self.xtwy * scale;
        let diag: Vec<f64> = (0..d).map(|j| gram[[j, j]]).collect();

        let objective =
            |beta: &Array1<f64>| 0.5 * scale * self.weighted_sse(beta) + lambda * l1(beta);

        let mut beta = init.clone();
        // residual correlation r = b - G beta = -grad
        let mut r = &b - &gram.dot(&beta);
        if let Some(t) = trace.as_deref_mut() {
            t.push(objective(&beta));
        }
        let mut violation = f64::INFINITY;
        // alternate full sweeps with sweeps over the nonzero coordinates only;
        // convergence is always certified by a full sweep
        let all: Vec<usize> = (0..d).collect();
        let mut active_phase = false;
        let mut active: Vec<usize> = Vec::new();
        for _sweep in 0..opts.max_iters {
            let coords = if active_phase { &active } else { &all };
            let mut max_delta: f64 = 0.0;
            for &j in coords {
                let old = beta[j];
                let new = if diag[j] > 0.0 {
                    soft_threshold(r[j] + diag[j] * old, lambda) / diag[j]
                } else {
                    0.0
                };
                let delta = new - old;
                if delta != 0.0 {
                    beta[j] = new;
                    r.scaled_add(-delta, &gram.row(j));
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(objective(&beta));
            }
            if active_phase {
                if max_delta <= opts.tol {
                    active_phase = false;
                }
                continue;
            }
            if max_delta <= opts.tol {
                r = &b - &gram.dot(&beta);
                let grad = -&r;
                violation = kkt_violation(&beta, &grad, lambda);
                if violation <= opts.tol {
                    return Ok(beta);
                }
            }
            active = (0..d).filter(|&j| beta[j] != 0.0).collect();
            active_phase = !active.is_empty() && active.len() < d;
        }
        Err(Error::Convergence {
            iterations: opts.max_iters,
            violation,
            last_iterate: beta.to_vec(),
        })
    }
}

/// Cyclic coordinate descent with closed-form soft-threshold updates.
///
/// Stops once a full sweep moves no coordinate by more than `tol` and the
/// stationarity conditions hold within `tol`.
pub fn solve_weighted_lasso(
    problem: &WeightedLassoProblem,
    init: &Array1<f64>,
    tol: f64,
    max_sweeps: usize,
) -> Result<Array1<f64>> {
    check_tol(tol)?;
    let gram = LassoGram::from_data(
        problem.design.view(),
        problem.response.view(),
        problem.weights.view(),
    );
    gram.solve(
        problem.sigma,
        problem.lambda,
        init,
        SolverOptions {
            tol,
            max_iters: max_sweeps,
        },
        None,
    )
}

/// Same as [`solve_weighted_lasso`], also returning the objective after every sweep
/// (the first entry is the objective at `init`).
pub fn solve_weighted_lasso_traced(
    problem: &WeightedLassoProblem,
    init: &Array1<f64>,
    tol: f64,
    max_sweeps: usize,
) -> Result<(Array1<f64>, Vec<f64>)> {
    check_tol(tol)?;
    let gram = LassoGram::from_data(
        problem.design.view(),
        problem.response.view(),
        problem.weights.view(),
    );
    let mut trace = Vec::new();
    let beta = gram.solve(
        problem.sigma,
        problem.lambda,
        init,
        SolverOptions {
            tol,
            max_iters: max_sweeps,
        },
        Some(&mut trace),
    )?;
    Ok((beta, trace))
}

// ---------------------------------------------------------------------------
// Penalized logistic regression with fractional responses
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LogisticProblem {
    design: Array2<f64>,
    responses: Array1<f64>,
    // weight on the group-2 term; 1 - responses unless supplied
    complements: Array1<f64>,
    lambda: f64,
}

impl LogisticProblem {
    pub fn new(design: Array2<f64>, responses: Array1<f64>, lambda: f64) -> Result<Self> {
        let complements = responses.mapv(|w| 1.0 - w);
        Self::with_complements(design, responses, complements, lambda)
    }

    /// Supplies the group-2 weights explicitly. When the EM step passes
    /// `sigmoid(a)` and `sigmoid(-a)`, relabeling the groups negates the fit
    /// bit for bit.
    pub fn with_complements(
        design: Array2<f64>,
        responses: Array1<f64>,
        complements: Array1<f64>,
        lambda: f64,
    ) -> Result<Self> {
        let n = design.nrows();
        if n == 0 {
            return Err(Error::arg("logistic regression needs at least one row"));
        }
        if responses.len() != n {
            return Err(Error::dim("responses", n, responses.len()));
        }
        if complements.len() != n {
            return Err(Error::dim("complements", n, complements.len()));
        }
        let unit = |v: &Array1<f64>| v.iter().all(|w| (0.0..=1.0).contains(w));
        if !unit(&responses) || !unit(&complements) {
            return Err(Error::arg("logistic responses must lie in [0, 1]"));
        }
        check_lambda(lambda)?;
        Ok(Self {
            design,
            responses,
            complements,
            lambda,
        })
    }

    pub fn design(&self) -> &Array2<f64> {
        &self.design
    }

    pub fn responses(&self) -> &Array1<f64> {
        &self.responses
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        self.lambda = lambda;
        Ok(self)
    }

    fn rows(&self, idx: &[usize]) -> LogisticProblem {
        LogisticProblem {
            design: self.design.select(Axis(0), idx),
            responses: self.responses.select(Axis(0), idx),
            complements: self.complements.select(Axis(0), idx),
            lambda: self.lambda,
        }
    }

    /// Negative mean log-likelihood (no penalty).
    pub fn loss(&self, theta: &Array1<f64>) -> f64 {
        self.loss_from_scores(&self.design.dot(theta))
    }

    fn loss_sum(&self, theta: &Array1<f64>) -> f64 {
        self.loss(theta) * self.design.nrows() as f64
    }

    /// Mean loss given the linear scores `Z theta`.
    fn loss_from_scores(&self, scores: &Array1<f64>) -> f64 {
        scores
            .iter()
            .zip(self.responses.iter().zip(self.complements.iter()))
            .map(|(&s, (&w, &wc))| {
                // softplus(s) and softplus(-s) share one exp; symmetric in the sign of s
                let tail = (-s.abs()).exp().ln_1p();
                let (up, down) = if s >= 0.0 {
                    (s + tail, tail)
                } else {
                    (tail, tail - s)
                };
                w * down + wc * up
            })
            .sum::<f64>()
            / self.design.nrows() as f64
    }

    pub fn objective(&self, theta: &Array1<f64>) -> f64 {
        self.loss(theta) + self.lambda * l1(theta)
    }

    /// `1/n sum_i (p(z_i . theta) - w_i) z_i`.
    pub fn smooth_gradient(&self, theta: &Array1<f64>) -> Array1<f64> {
        self.gradient_from_scores(&self.design.dot(theta))
    }

    fn gradient_from_scores(&self, scores: &Array1<f64>) -> Array1<f64> {
        let resid: Array1<f64> = scores
            .iter()
            .zip(self.responses.iter().zip(self.complements.iter()))
            .map(|(&s, (&w, &wc))| {
                let e = (-s.abs()).exp();
                let (big, small) = (1.0 / (1.0 + e), e / (1.0 + e));
                let (p_up, p_down) = if s >= 0.0 { (big, small) } else { (small, big) };
                wc * p_up - w * p_down
            })
            .collect();
        self.design.t().dot(&resid) / self.design.nrows() as f64
    }

    pub fn kkt_violation(&self, theta: &Array1<f64>) -> f64 {
        kkt_violation(theta, &self.smooth_gradient(theta), self.lambda)
    }

    /// Smallest lambda for which `theta = 0` is optimal.
    pub fn lambda_max(&self) -> f64 {
        self.smooth_gradient(&Array1::zeros(self.design.ncols()))
            .iter()
            .map(|g| g.abs())
            .fold(0.0, f64::max)
    }
}

fn prox_step(point: &Array1<f64>, grad: &Array1<f64>, step: f64, lambda: f64) -> Array1<f64> {
    point
        .iter()
        .zip(grad.iter())
        .map(|(&t, &g)| soft_threshold(t - step * g, step * lambda))
        .collect()
}

fn solve_logistic_inner(
    p: &LogisticProblem,
    init: &Array1<f64>,
    opts: SolverOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<Array1<f64>> {
    check_init(init, p.design.ncols())?;
    let lambda = p.lambda;
    let mut theta = init.clone();
    let mut prev = theta.clone();
    // scores Z theta of the current and previous iterates; extrapolation is linear in them
    let mut scores = p.design.dot(&theta);
    let mut prev_scores = scores.clone();
    // momentum sequence; 1 means "no momentum on the next step"
    let mut momentum: f64 = 1.0;
    let mut f = p.loss_from_scores(&scores) + lambda * l1(&theta);
    if let Some(t) = trace.as_deref_mut() {
        t.push(f);
    }
    let mut step: f64 = 1.0;
    let mut violation = f64::INFINITY;
    for _ in 0..opts.max_iters {
        let grad = p.gradient_from_scores(&scores);
        violation = kkt_violation(&theta, &grad, lambda);
        if violation <= opts.tol {
            return Ok(theta);
        }
        step = (step * 2.0).min(1e6);
        // below the resolution of F the decrease tests degenerate to "no increase"
        let resolution = 4.0 * f64::EPSILON * f.abs().max(1.0);

        // accelerated trial from the extrapolated point; kept only if F does not increase
        let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let coef = (momentum - 1.0) / next_momentum;
        let mut accepted = false;
        if coef > 0.0 {
            let y = &theta + &((&theta - &prev) * coef);
            let y_scores = &scores + &((&scores - &prev_scores) * coef);
            let loss_y = p.loss_from_scores(&y_scores);
            let grad_y = p.gradient_from_scores(&y_scores);
            let mut trial = step;
            while trial >= 1e-20 {
                let candidate = prox_step(&y, &grad_y, trial, lambda);
                let diff = &candidate - &y;
                let bound = loss_y + grad_y.dot(&diff) + diff.dot(&diff) / (2.0 * trial);
                let cand_scores = p.design.dot(&candidate);
                let loss_c = p.loss_from_scores(&cand_scores);
                if loss_c <= bound + resolution {
                    let f_new = loss_c + lambda * l1(&candidate);
                    if f_new <= f {
                        prev = std::mem::replace(&mut theta, candidate);
                        prev_scores = std::mem::replace(&mut scores, cand_scores);
                        f = f_new;
                        momentum = next_momentum;
                        step = trial;
                        accepted = true;
                    }
                    break;
                }
                trial *= 0.5;
            }
        }

        if !accepted {
            // plain proximal step with the Armijo test; restarts the momentum
            loop {
                let candidate = prox_step(&theta, &grad, step, lambda);
                let moved: f64 = candidate
                    .iter()
                    .zip(theta.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if moved == 0.0 {
                    // the step no longer changes the iterate at this precision
                    return if violation <= opts.tol.max(1e-12) {
                        Ok(theta)
                    } else {
                        Err(Error::Convergence {
                            iterations: opts.max_iters,
                            violation,
                            last_iterate: theta.to_vec(),
                        })
                    };
                }
                let cand_scores = p.design.dot(&candidate);
                let f_new = p.loss_from_scores(&cand_scores) + lambda * l1(&candidate);
                let required = ARMIJO_CONSTANT * moved / step;
                if f_new <= f - required || (required <= resolution && f_new <= f + resolution) {
                    prev = std::mem::replace(&mut theta, candidate);
                    prev_scores = std::mem::replace(&mut scores, cand_scores);
                    f = f_new;
                    momentum = (1.0 + 5f64.sqrt()) / 2.0;
                    break;
                }
                step *= 0.5;
                if step < 1e-20 {
                    return Err(Error::Convergence {
                        iterations: opts.max_iters,
                        violation,
                        last_iterate: theta.to_vec(),
                    });
                }
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(f);
        }
    }
    let grad = p.gradient_from_scores(&scores);
    let final_violation = kkt_violation(&theta, &grad, lambda);
    if final_violation <= opts.tol {
        return Ok(theta);
    }
    Err(Error::Convergence {
        iterations: opts.max_iters,
        violation: final_violation.min(violation),
        last_iterate: theta.to_vec(),
    })
}

/// Proximal gradient with a halving backtracking search.
///
/// A step is accepted once `F(new) <= F(old) - c/step * |new - old|^2` with
/// `c = 1e-4`; the first trial step of each iteration doubles the previous
/// accepted one. Each iteration first tries a momentum-extrapolated step and
/// keeps it only when it does not increase `F`, so accepted iterates are
/// monotone. Terminates when the stationarity conditions hold within `tol`.
pub fn solve_penalized_logistic(
    problem: &LogisticProblem,
    init: &Array1<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<Array1<f64>> {
    check_tol(tol)?;
    solve_logistic_inner(problem, init, SolverOptions { tol, max_iters }, None)
}

/// [`solve_penalized_logistic`] plus the objective after each accepted step.
pub fn solve_penalized_logistic_traced(
    problem: &LogisticProblem,
    init: &Array1<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<(Array1<f64>, Vec<f64>)> {
    check_tol(tol)?;
    let mut trace = Vec::new();
    let theta = solve_logistic_inner(
        problem,
        init,
        SolverOptions { tol, max_iters },
        Some(&mut trace),
    )?;
    Ok((theta, trace))
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

/// A problem with its data fixed and lambda left free.
#[derive(Debug, Clone, Copy)]
pub enum CvFamily<'a> {
    Lasso(&'a WeightedLassoProblem),
    Logistic(&'a LogisticProblem),
}

impl CvFamily<'_> {
    fn rows(&self) -> usize {
        match self {
            CvFamily::Lasso(p) => p.design.nrows(),
            CvFamily::Logistic(p) => p.design.nrows(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            CvFamily::Lasso(p) => p.design.ncols(),
            CvFamily::Logistic(p) => p.design.ncols(),
        }
    }

    pub fn lambda_max(&self) -> f64 {
        match self {
            CvFamily::Lasso(p) => p.lambda_max(),
            CvFamily::Logistic(p) => p.lambda_max(),
        }
    }
}

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_GRID_POINTS: usize = 20;
pub const DEFAULT_GRID_RATIO: f64 = 1e-3;

/// `points` log-spaced values from `lambda_max` down to `ratio * lambda_max`,
/// in decreasing order.
pub fn lambda_grid(lambda_max: f64, points: usize, ratio: f64) -> Vec<f64> {
    if lambda_max <= 0.0 || points <= 1 {
        return vec![lambda_max.max(0.0)];
    }
    let lo = ratio.ln();
    (0..points)
        .map(|i| lambda_max * (lo * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Grid floor used when there are fewer rows than coefficients; the far end
/// of the path is both unidentified and slow to solve there.
pub const WIDE_GRID_RATIO: f64 = 1e-2;

/// The default grid: `DEFAULT_GRID_POINTS` values down to
/// `DEFAULT_GRID_RATIO * lambda_max`, or `WIDE_GRID_RATIO * lambda_max` when
/// the problem has fewer rows than columns.
pub fn default_grid(family: CvFamily<'_>) -> Vec<f64> {
    let ratio = if family.rows() < family.dim() {
        WIDE_GRID_RATIO
    } else {
        DEFAULT_GRID_RATIO
    };
    lambda_grid(family.lambda_max(), DEFAULT_GRID_POINTS, ratio)
}

/// Fold index of each of `n` rows: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, streams::FOLDS));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

/// Iteration budget of a single fit inside cross-validation.
pub const CV_MAX_ITERS: usize = 2000;

/// Held-out loss for each grid value.
///
/// Each fold walks the grid from the largest value down with warm starts. A
/// fit that does not converge within [`CV_MAX_ITERS`] gets an infinite loss
/// and ends that fold's walk: every smaller value is treated the same way,
/// since shrinking the penalty only makes the problem harder.
pub fn cv_losses(
    family: CvFamily<'_>,
    folds: usize,
    grid: &[f64],
    seed: u64,
    opts: SolverOptions,
) -> Result<Vec<f64>> {
    if folds < 2 {
        return Err(Error::arg(format!(
            "cross-validation needs at least 2 folds, got {folds}"
        )));
    }
    if grid.is_empty() {
        return Err(Error::arg("lambda grid is empty"));
    }
    if let Some(bad) = grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::arg(format!(
            "grid values must be nonnegative, got {bad}"
        )));
    }
    let n = family.rows();
    if n < folds {
        return Err(Error::arg(format!(
            "{n} samples cannot be split into {folds} folds"
        )));
    }
    let cv_opts = SolverOptions {
        tol: opts.tol,
        max_iters: opts.max_iters.min(CV_MAX_ITERS),
    };
    let assignment = fold_assignment(n, folds, seed);
    let members: Vec<Vec<usize>> = (0..folds)
        .map(|f| (0..n).filter(|&i| assignment[i] == f).collect())
        .collect();

    // descending order keeps warm starts along a shrinking penalty
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]).then(a.cmp(&b)));

    let mut totals = vec![0.0; grid.len()];
    match family {
        CvFamily::Lasso(p) => {
            let fold_grams: Vec<LassoGram> = members
                .iter()
                .map(|idx| {
                    LassoGram::from_data(
                        p.design.select(Axis(0), idx).view(),
                        p.response.select(Axis(0), idx).view(),
                        p.weights.select(Axis(0), idx).view(),
                    )
                })
                .collect();
            for held in 0..folds {
                let mut train: Option<LassoGram> = None;
                for (f, g) in fold_grams.iter().enumerate() {
                    if f != held {
                        train = Some(match train {
                            None => g.clone(),
                            Some(acc) => acc.plus(g),
                        });
                    }
                }
                let train = train.expect("at least two folds");
                let mut beta = Array1::zeros(family.dim());
                let mut failed = false;
                for &gi in &order {
                    let loss = if failed {
                        f64::INFINITY
                    } else if train.weight_sum <= 0.0 {
                        // nothing to learn from: the zero fit
                        fold_grams[held].weighted_sse(&Array1::zeros(family.dim()))
                    } else {
                        match train.solve(p.sigma, grid[gi], &beta, cv_opts, None) {
                            Ok(b) => {
                                beta = b;
                                fold_grams[held].weighted_sse(&beta)
                            }
                            Err(Error::Convergence { .. }) => {
                                failed = true;
                                f64::INFINITY
                            }
                            Err(e) => return Err(e),
                        }
                    };
                    totals[gi] += loss;
                }
            }
        }
        CvFamily::Logistic(p) => {
            for (held, held_rows) in members.iter().enumerate() {
                let train_idx: Vec<usize> = (0..n).filter(|&i| assignment[i] != held).collect();
                let train = p.rows(&train_idx);
                let test = p.rows(held_rows);
                let mut theta = Array1::zeros(family.dim());
                let mut failed = false;
                for &gi in &order {
                    if failed {
                        totals[gi] += f64::INFINITY;
                        continue;
                    }
                    let problem = train.clone().with_lambda(grid[gi])?;
                    let loss = match solve_logistic_inner(&problem, &theta, cv_opts, None) {
                        Ok(t) => {
                            theta = t;
                            test.loss_sum(&theta)
                        }
                        Err(Error::Convergence { .. }) => {
                            failed = true;
                            f64::INFINITY
                        }
                        Err(e) => return Err(e),
                    };
                    totals[gi] += loss;
                }
            }
        }
    }
    Ok(totals.into_iter().map(|t| t / n as f64).collect())
}

/// Grid value with the smallest mean held-out loss; ties go to the larger lambda.
pub fn cross_validate_lambda(
    family: CvFamily<'_>,
    folds: usize,
    grid: &[f64],
    seed: u64,
) -> Result<f64> {
    cross_validate_lambda_with(family, folds, grid, seed, SolverOptions::default())
}

pub fn cross_validate_lambda_with(
    family: CvFamily<'_>,
    folds: usize,
    grid: &[f64],
    seed: u64,
    opts: SolverOptions,
) -> Result<f64> {
    let losses = cv_losses(family, folds, grid, seed, opts)?;
    select_lambda(grid, &losses)
}

pub(crate) fn select_lambda(grid: &[f64], losses: &[f64]) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (&lambda, &loss) in grid.iter().zip(losses) {
        if !loss.is_finite() {
            continue;
        }
        best = match best {
            None => Some((lambda, loss)),
            Some((bl, bloss)) => {
                if loss < bloss || (loss == bloss && lambda > bl) {
                    Some((lambda, loss))
                } else {
                    Some((bl, bloss))
                }
            }
        };
    }
    best.map(|(l, _)| l).ok_or_else(|| {
        Error::Degenerate("no grid value produced a finite cross-validation loss".into())
    })
}
