//! Sample-split regularized EM for the two-group mixed linear model.
//!
//! The batch is cut into `t_max` contiguous folds. Iteration `t` computes the
//! responsibilities of fold `t` at the previous iterate and then solves three
//! penalized problems on that fold: a weighted LASSO for each `beta` and an
//! l1-penalized logistic regression with fractional responses for `theta`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{posterior_log_odds, sigmoid, Group, Interaction, ModelParams};
use crate::rng::derive_seed;
use crate::sparse::{
    cross_validate_lambda_with, default_grid, solve_penalized_logistic, solve_weighted_lasso,
    CvFamily, LogisticProblem, SolverOptions, WeightedLassoProblem, DEFAULT_FOLDS,
    DEFAULT_MAX_ITERS, DEFAULT_TOL,
};

/// How the penalty level of each M-step problem is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    #[default]
    CrossValidation,
    Theoretical,
    Fixed(f64),
}

/// Constants of the theoretical penalty schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaScheduleConstants {
    pub c_bar: f64,
    pub kappa: f64,
    /// Error of the initial estimate.
    pub delta0: f64,
    /// Sparsity level.
    pub s: usize,
    /// Ambient dimension (only `ln d` enters).
    pub d: f64,
}

impl LambdaScheduleConstants {
    /// `kappa_tilde = c_bar^2 * kappa`.
    pub fn kappa_tilde(&self) -> f64 {
        self.c_bar * self.c_bar * self.kappa
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_bar > 0.0 && self.kappa > 0.0) {
            return Err(Error::arg("c_bar and kappa must be positive"));
        }
        if !(self.delta0 >= 0.0) {
            return Err(Error::arg("delta0 must be nonnegative"));
        }
        if self.s == 0 {
            return Err(Error::arg("sparsity s must be positive"));
        }
        if !(self.d >= 1.0) {
            return Err(Error::arg("dimension d must be at least 1"));
        }
        if self.kappa_tilde() >= 0.5 {
            return Err(Error::arg(format!(
                "c_bar^2 * kappa = {} must be below 1/2",
                self.kappa_tilde()
            )));
        }
        Ok(())
    }
}

/// Penalty for M-step iteration `t + 1` on folds of size `n`:
///
/// ```text
/// 2 c (1 - (2k)^(t+1)) / (1 - 2k) * sqrt(ln d / n) + c kappa (2k)^t / sqrt(s) * delta0
/// ```
///
/// with `k = c^2 kappa`.
pub fn lambda_schedule(t: usize, n: usize, constants: &LambdaScheduleConstants) -> Result<f64> {
    constants.validate()?;
    if n == 0 {
        return Err(Error::arg("fold size must be positive"));
    }
    let c = constants.c_bar;
    let q = 2.0 * constants.kappa_tilde();
    let t = i32::try_from(t).map_err(|_| Error::arg("iteration index too large"))?;
    let stat = 2.0 * c * (1.0 - q.powi(t + 1)) / (1.0 - q) * (constants.d.ln() / n as f64).sqrt();
    let contraction =
        c * constants.kappa * q.powi(t) / (constants.s as f64).sqrt() * constants.delta0;
    Ok(stat + contraction)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmConfig {
    pub t_max: usize,
    pub lambda_mode: LambdaMode,
    pub schedule_constants: Option<LambdaScheduleConstants>,
    pub tol: f64,
    pub max_sweeps: usize,
    pub cv_folds: usize,
    pub cv_seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            t_max: 1,
            lambda_mode: LambdaMode::CrossValidation,
            schedule_constants: None,
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_ITERS,
            cv_folds: DEFAULT_FOLDS,
            cv_seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::arg("t_max must be positive"));
        }
        if self.lambda_mode == LambdaMode::Theoretical {
            match &self.schedule_constants {
                Some(c) => c.validate()?,
                None => {
                    return Err(Error::arg(
                        "theoretical lambda mode requires schedule constants",
                    ))
                }
            }
        }
        if let LambdaMode::Fixed(l) = self.lambda_mode {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::arg(format!(
                    "fixed lambda must be nonnegative, got {l}"
                )));
            }
        }
        if self.cv_folds < 2 {
            return Err(Error::arg("cv_folds must be at least 2"));
        }
        Ok(())
    }

    pub(crate) fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iters: self.max_sweeps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmDiagnostic {
    /// A group's responsibilities summed to (almost) nothing on a fold; its
    /// coefficients were carried over unchanged.
    DegenerateWeight {
        iteration: usize,
        group: Group,
        total_weight: f64,
    },
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub params: ModelParams,
    pub diagnostics: Vec<EmDiagnostic>,
    /// `(lambda_beta1, lambda_beta2, lambda_theta)` per iteration.
    pub lambdas: Vec<[f64; 3]>,
}

/// Penalty selection shared by every penalized fit in the crate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PenaltyRule {
    pub mode: LambdaMode,
    pub folds: usize,
    pub seed: u64,
    pub opts: SolverOptions,
    /// Used only in theoretical mode.
    pub scheduled: Option<f64>,
}

impl PenaltyRule {
    fn choose(&self, family: CvFamily<'_>, rows: usize) -> Result<f64> {
        match self.mode {
            LambdaMode::Fixed(l) => Ok(l),
            LambdaMode::Theoretical => self
                .scheduled
                .ok_or_else(|| Error::arg("theoretical lambda mode without a schedule")),
            LambdaMode::CrossValidation => {
                let folds = self.folds.min(rows);
                if folds < 2 {
                    return Ok(family.lambda_max());
                }
                let grid = default_grid(family);
                cross_validate_lambda_with(family, folds, &grid, self.seed, self.opts)
            }
        }
    }

    pub(crate) fn fit_lasso(
        &self,
        design: Array2<f64>,
        response: Array1<f64>,
        weights: Array1<f64>,
        sigma: f64,
        init: &Array1<f64>,
    ) -> Result<(Array1<f64>, f64)> {
        let rows = design.nrows();
        let problem = WeightedLassoProblem::new(design, response, weights, sigma, 0.0)?;
        let lambda = self.choose(CvFamily::Lasso(&problem), rows)?;
        let problem = problem.with_lambda(lambda)?;
        let beta = solve_weighted_lasso(&problem, init, self.opts.tol, self.opts.max_iters)?;
        Ok((beta, lambda))
    }

    pub(crate) fn fit_logistic(
        &self,
        problem: LogisticProblem,
        init: &Array1<f64>,
    ) -> Result<(Array1<f64>, f64)> {
        let rows = problem.design().nrows();
        let lambda = self.choose(CvFamily::Logistic(&problem), rows)?;
        let problem = problem.with_lambda(lambda)?;
        let theta = solve_penalized_logistic(&problem, init, self.opts.tol, self.opts.max_iters)?;
        Ok((theta, lambda))
    }
}

pub(crate) fn design_matrices(data: &[Interaction]) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let n = data.len();
    let d_x = data[0].context.d_x();
    let d_z = data[0].context.d_z();
    let mut x = Array2::zeros((n, d_x));
    let mut z = Array2::zeros((n, d_z));
    let mut y = Array1::zeros(n);
    for (i, it) in data.iter().enumerate() {
        x.row_mut(i).assign(&it.x());
        z.row_mut(i).assign(it.z());
        y[i] = it.reward;
    }
    (x, z, y)
}

/// Contiguous folds in arrival order; the remainder joins the last fold.
pub fn fold_ranges(total: usize, t_max: usize) -> Vec<std::ops::Range<usize>> {
    let size = total / t_max;
    (0..t_max)
        .map(|t| {
            let start = t * size;
            let end = if t + 1 == t_max { total } else { start + size };
            start..end
        })
        .collect()
}

/// Responsibilities of group 1 and group 2 for every row, each evaluated on
/// its own branch of the logistic function.
pub fn e_step(
    x: &Array2<f64>,
    z: &Array2<f64>,
    y: &Array1<f64>,
    params: &ModelParams,
) -> (Array1<f64>, Array1<f64>) {
    let log_odds: Vec<f64> = (0..y.len())
        .map(|i| posterior_log_odds(y[i], x.row(i), z.row(i), params))
        .collect();
    let w1 = log_odds.iter().map(|&a| sigmoid(a)).collect();
    let w2 = log_odds.iter().map(|&a| sigmoid(-a)).collect();
    (w1, w2)
}

/// Runs `t_max` EM iterations starting from `init`; `sigma` is held fixed.
pub fn em_fit(data: &[Interaction], init: &ModelParams, config: &EmConfig) -> Result<EmFit> {
    config.validate()?;
    if data.len() < config.t_max {
        return Err(Error::arg(format!(
            "{} samples cannot be split into {} EM folds",
            data.len(),
            config.t_max
        )));
    }
    let first = &data[0].context;
    if first.d_x() != init.d_x() {
        return Err(Error::dim("arm features", init.d_x(), first.d_x()));
    }
    if first.d_z() != init.d_z() {
        return Err(Error::dim("gating features", init.d_z(), first.d_z()));
    }
    if data
        .iter()
        .any(|it| it.context.d_x() != init.d_x() || it.context.d_z() != init.d_z())
    {
        return Err(Error::arg(
            "interactions have inconsistent feature dimensions",
        ));
    }

    let sigma = init.sigma();
    let mut current = init.clone();
    let mut diagnostics = Vec::new();
    let mut lambdas = Vec::with_capacity(config.t_max);

    for (t, range) in fold_ranges(data.len(), config.t_max)
        .into_iter()
        .enumerate()
    {
        let fold = &data[range];
        let n = fold.len();
        let (x, z, y) = design_matrices(fold);
        let (w1, w2) = e_step(&x, &z, &y, &current);

        let scheduled = match (config.lambda_mode, &config.schedule_constants) {
            (LambdaMode::Theoretical, Some(c)) => Some(lambda_schedule(t, n, c)?),
            _ => None,
        };
        // one fold partition per iteration, shared by all three problems
        let rule = PenaltyRule {
            mode: config.lambda_mode,
            folds: config.cv_folds,
            seed: derive_seed(config.cv_seed, t as u64),
            opts: config.solver_options(),
            scheduled,
        };

        let floor = 1e-8 * n as f64;
        let mut fit_beta = |weights: &Array1<f64>, group: Group, prev: &Array1<f64>| {
            let total = weights.sum();
            if total < floor {
                diagnostics.push(EmDiagnostic::DegenerateWeight {
                    iteration: t + 1,
                    group,
                    total_weight: total,
                });
                return Ok((prev.clone(), f64::NAN));
            }
            rule.fit_lasso(x.clone(), y.clone(), weights.clone(), sigma, prev)
        };
        let (beta1, l1) = fit_beta(&w1, Group::One, current.beta1())?;
        let (beta2, l2) = fit_beta(&w2, Group::Two, current.beta2())?;

        let logistic = LogisticProblem::with_complements(z, w1, w2, 0.0)?;
        let (theta, l3) = rule.fit_logistic(logistic, current.theta())?;

        current = ModelParams::new(theta, beta1, beta2, sigma)?;
        lambdas.push([l1, l2, l3]);
    }

    Ok(EmFit {
        params: current,
        diagnostics,
        lambdas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Context;
    use ndarray::array;

    fn constants() -> LambdaScheduleConstants {
        LambdaScheduleConstants {
            c_bar: 1.0,
            kappa: 0.1,
            delta0: 1.0,
            s: 1,
            d: std::f64::consts::E,
        }
    }

    #[test]
    fn schedule_hand_value() {
        let l = lambda_schedule(0, 100, &constants()).unwrap();
        assert!((l - 0.3).abs() < 1e-15, "{l}");
    }

    #[test]
    fn schedule_without_initial_error_is_statistical_term_only() {
        let c = LambdaScheduleConstants {
            delta0: 0.0,
            ..constants()
        };
        for t in 0..10 {
            let q: f64 = 0.2;
            let expected = 2.0 * (1.0 - q.powi(t as i32 + 1)) / (1.0 - q) * 0.1;
            assert!((lambda_schedule(t, 100, &c).unwrap() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn schedule_converges_monotonically_to_the_limit() {
        let c = LambdaScheduleConstants {
            delta0: 0.0,
            ..constants()
        };
        let limit = 2.0 / (1.0 - 0.2) * (1.0f64 / 100.0).sqrt();
        let values: Vec<f64> = (0..60)
            .map(|t| lambda_schedule(t, 100, &c).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] >= w[0]));
        assert!((values[59] - limit).abs() < 1e-12);
    }

    #[test]
    fn schedule_rejects_large_kappa() {
        let c = LambdaScheduleConstants {
            kappa: 0.5,
            ..constants()
        };
        assert!(lambda_schedule(0, 10, &c).is_err());
    }

    #[test]
    fn folds_are_contiguous_with_remainder_last() {
        let r = fold_ranges(10, 3);
        assert_eq!(r, vec![0..3, 3..6, 6..10]);
        assert_eq!(fold_ranges(7, 1), vec![0..7]);
    }

    fn toy_data(n: usize) -> Vec<Interaction> {
        (0..n)
            .map(|i| {
                let a = i as f64 / n as f64;
                let ctx = Context::from_rows(
                    vec![a - 0.5, (3.0 * a).sin()],
                    vec![vec![1.0, a, (7.0 * a).cos()], vec![-1.0, 1.0 - a, a * a]],
                )
                .unwrap();
                let reward = if i % 3 == 0 { 2.0 * a } else { -1.0 + a };
                Interaction::new(ctx, i % 2, reward, None).unwrap()
            })
            .collect()
    }

    #[test]
    fn symmetric_init_stays_symmetric() {
        let data = toy_data(40);
        let init = ModelParams::new(
            array![0.0, 0.0],
            array![0.3, 0.1, 0.0],
            array![0.3, 0.1, 0.0],
            1.0,
        )
        .unwrap();
        let fit = em_fit(&data, &init, &EmConfig::default()).unwrap();
        assert_eq!(fit.params.beta1(), fit.params.beta2());
    }

    #[test]
    fn em_rejects_bad_inputs() {
        let data = toy_data(3);
        let init = ModelParams::zeros(2, 3, 1.0).unwrap();
        let cfg = EmConfig {
            t_max: 4,
            ..EmConfig::default()
        };
        assert!(em_fit(&data, &init, &cfg).is_err());
        let wrong = ModelParams::zeros(2, 4, 1.0).unwrap();
        assert!(em_fit(&data, &wrong, &EmConfig::default()).is_err());
        let cfg = EmConfig {
            lambda_mode: LambdaMode::Theoretical,
            ..EmConfig::default()
        };
        assert!(em_fit(&data, &init, &cfg).is_err());
    }

    #[test]
    fn degenerate_group_keeps_previous_coefficients() {
        let data = toy_data(30);
        let init = ModelParams::new(
            array![0.0, 0.0],
            array![0.0, 0.0, 0.0],
            array![5.0, 5.0, 5.0],
            1e-2,
        )
        .unwrap();
        let mut shifted = data.clone();
        for it in &mut shifted {
            // rewards exactly on beta1's line, far from beta2's
            it.reward = 0.0;
        }
        let cfg = EmConfig {
            lambda_mode: LambdaMode::Fixed(0.01),
            ..EmConfig::default()
        };
        let fit = em_fit(&shifted, &init, &cfg).unwrap();
        assert!(fit.diagnostics.iter().any(|d| matches!(
            d,
            EmDiagnostic::DegenerateWeight {
                group: Group::Two,
                ..
            }
        )));
        assert_eq!(fit.params.beta2(), init.beta2());
    }
}
