//! Three-stage initializer for the first EM fit.
//!
//! 1. A pooled LASSO of the reward on the logged features screens a support `S`.
//! 2. A two-component spherical Gaussian mixture clusters the standardized
//!    vectors `(y, x_S)`; an optional mixture-of-regressions pass on `x_S`
//!    then refines the labels (see [`InitConfig::refine`]).
//! 3. A penalized logistic fit of the labels on `z` gives `theta`, and one
//!    LASSO per cluster gives the two coefficient vectors.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::em::{design_matrices, LambdaMode, PenaltyRule};
use crate::error::{Error, Result};
use crate::model::{Group, Interaction, ModelParams};
use crate::rng::{self, derive_seed, streams, StreamRng};
use crate::sparse::{
    cv_losses, default_grid, select_lambda, solve_weighted_lasso, CvFamily, LogisticProblem,
    SolverOptions, WeightedLassoProblem, DEFAULT_FOLDS,
};

/// Smallest data set the initializer accepts.
pub const MIN_SAMPLES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub screen_lambda_mode: LambdaMode,
    pub gmm_restarts: usize,
    pub gmm_max_iters: usize,
    pub gmm_tol: f64,
    /// Replace `sigma` by the pooled within-cluster residual standard deviation.
    pub estimate_sigma: bool,
    /// Noise level used when `estimate_sigma` is off.
    pub sigma: f64,
    /// Refine the clustering with a mixture of linear regressions of `y` on
    /// `x_S`. Clusters in `(y, x_S)` can follow the arm instead of the group
    /// when arm feature means differ; conditioning on `x` removes that.
    pub refine: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            screen_lambda_mode: LambdaMode::CrossValidation,
            gmm_restarts: 10,
            gmm_max_iters: 200,
            gmm_tol: 1e-8,
            estimate_sigma: false,
            sigma: 1.0,
            refine: true,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gmm_restarts == 0 || self.gmm_max_iters == 0 {
            return Err(Error::arg(
                "gmm_restarts and gmm_max_iters must be positive",
            ));
        }
        if !(self.gmm_tol > 0.0) {
            return Err(Error::arg("gmm_tol must be positive"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::arg("sigma must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitResult {
    pub params: ModelParams,
    /// Cluster label of every sample, oriented like `params`.
    pub labels: Vec<Group>,
    /// Support selected by the screening LASSO.
    pub support: Vec<usize>,
    /// Log-likelihood trace of the winning mixture run.
    pub gmm_log_likelihood: Vec<f64>,
    /// Set when one cluster got fewer than two samples and the pooled fit was used.
    pub degenerate: bool,
}

/// A fitted two-component spherical mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub weights: [f64; 2],
    pub means: [Array1<f64>; 2],
    pub variance: f64,
    pub responsibilities: Array1<f64>,
    pub log_likelihood: Vec<f64>,
}

impl GmmFit {
    /// Hard labels: 0 when the first component is at least as responsible.
    pub fn labels(&self) -> Vec<usize> {
        self.responsibilities
            .iter()
            .map(|&r| if r >= 0.5 { 0 } else { 1 })
            .collect()
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// k-means++ choice of two distinct starting centres.
fn seed_centres(points: &Array2<f64>, rng: &mut StreamRng) -> [Array1<f64>; 2] {
    let n = points.nrows();
    let first = rng.random_range(0..n);
    let c0 = points.row(first).to_owned();
    let d2: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|r| (&r - &c0).mapv(|v| v * v).sum())
        .collect();
    let total: f64 = d2.iter().sum();
    let second = if total > 0.0 {
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = n - 1;
        for (i, &v) in d2.iter().enumerate() {
            acc += v;
            if u < acc {
                pick = i;
                break;
            }
        }
        pick
    } else {
        rng.random_range(0..n)
    };
    [c0, points.row(second).to_owned()]
}

fn gmm_run(points: &Array2<f64>, max_iters: usize, tol: f64, rng: &mut StreamRng) -> GmmFit {
    let (n, p) = points.dim();
    let p = p.max(1) as f64;
    let mut means = seed_centres(points, rng);
    let mut weights: [f64; 2] = [0.5, 0.5];
    let spread: f64 = points
        .rows()
        .into_iter()
        .map(|r| {
            let a = (&r - &means[0]).mapv(|v| v * v).sum();
            let b = (&r - &means[1]).mapv(|v| v * v).sum();
            a.min(b)
        })
        .sum::<f64>()
        / (n as f64 * p);
    let floor = 1e-10;
    let mut variance = spread.max(floor);
    let mut resp = Array1::zeros(n);
    let mut trace: Vec<f64> = Vec::new();

    for _ in 0..max_iters {
        // E-step and log-likelihood at the current parameters
        let mut ll = 0.0;
        for (i, r) in points.rows().into_iter().enumerate() {
            let lp: Vec<f64> = (0..2)
                .map(|k| {
                    let sq = (&r - &means[k]).mapv(|v| v * v).sum();
                    weights[k].ln()
                        - 0.5 * sq / variance
                        - 0.5 * p * (2.0 * std::f64::consts::PI * variance).ln()
                })
                .collect();
            let lse = log_sum_exp(lp[0], lp[1]);
            ll += lse;
            resp[i] = (lp[0] - lse).exp();
        }
        let converged = trace
            .last()
            .is_some_and(|&prev| (ll - prev).abs() <= tol * (1.0 + ll.abs()));
        trace.push(ll);
        if converged {
            break;
        }

        // M-step
        let r0 = resp.sum();
        let r1 = n as f64 - r0;
        if r0 <= 0.0 || r1 <= 0.0 {
            break;
        }
        weights = [r0 / n as f64, r1 / n as f64];
        let w0 = resp.clone();
        let w1 = resp.mapv(|r| 1.0 - r);
        means[0] = points.t().dot(&w0) / r0;
        means[1] = points.t().dot(&w1) / r1;
        let mut ss = 0.0;
        for (i, r) in points.rows().into_iter().enumerate() {
            ss += w0[i] * (&r - &means[0]).mapv(|v| v * v).sum();
            ss += w1[i] * (&r - &means[1]).mapv(|v| v * v).sum();
        }
        variance = (ss / (n as f64 * p)).max(floor);
    }
    GmmFit {
        weights,
        means,
        variance,
        responsibilities: resp,
        log_likelihood: trace,
    }
}

/// Two-component Gaussian mixture with one spherical variance shared by both
/// components. Runs `restarts` k-means++-seeded EM runs and keeps the highest
/// final log-likelihood (earliest run on ties).
pub fn fit_gmm(
    points: &Array2<f64>,
    restarts: usize,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<GmmFit> {
    if points.nrows() < 2 {
        return Err(Error::arg(
            "a two-component mixture needs at least two points",
        ));
    }
    if restarts == 0 || max_iters == 0 {
        return Err(Error::arg("restarts and max_iters must be positive"));
    }
    let mut best: Option<GmmFit> = None;
    for r in 0..restarts {
        let mut rng = rng::stream(derive_seed(seed, r as u64), streams::INIT);
        let fit = gmm_run(points, max_iters, tol, &mut rng);
        let better = match &best {
            None => true,
            Some(b) => final_ll(&fit) > final_ll(b),
        };
        if better {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn final_ll(fit: &GmmFit) -> f64 {
    fit.log_likelihood
        .last()
        .copied()
        .unwrap_or(f64::NEG_INFINITY)
}

fn standardize(points: &mut Array2<f64>) {
    for mut col in points.axis_iter_mut(Axis(1)) {
        let mean = col.mean().unwrap_or(0.0);
        col.mapv_inplace(|v| v - mean);
        let sd = (col.mapv(|v| v * v).sum() / col.len() as f64).sqrt();
        if sd > 0.0 {
            col.mapv_inplace(|v| v / sd);
        }
    }
}

/// Weighted least squares with a tiny ridge for numerical safety.
fn weighted_ls(x: &DMatrix<f64>, y: &DVector<f64>, w: &[f64]) -> DVector<f64> {
    let p = x.ncols();
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for i in 0..x.nrows() {
        let row = x.row(i);
        for a in 0..p {
            let wa = w[i] * row[a];
            rhs[a] += wa * y[i];
            for b in 0..=a {
                gram[(a, b)] += wa * row[b];
            }
        }
    }
    let trace: f64 = (0..p).map(|a| gram[(a, a)]).sum();
    let ridge = 1e-8 * (trace / p.max(1) as f64).max(1e-12);
    for a in 0..p {
        gram[(a, a)] += ridge;
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
    }
    match gram.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => DVector::zeros(p),
    }
}

/// EM for a two-component mixture of linear regressions, started from hard
/// labels. Returns the final log-likelihood and group-0 responsibilities.
fn mixture_regression(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    start: &[usize],
    max_iters: usize,
    tol: f64,
) -> (f64, Vec<f64>) {
    let n = y.len();
    let mut resp: Vec<f64> = start
        .iter()
        .map(|&l| if l == 0 { 1.0 } else { 0.0 })
        .collect();
    let var_y = {
        let m = y.mean();
        y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64
    };
    let floor = 1e-8 * var_y.max(1e-300);
    let mut last = f64::NEG_INFINITY;
    for _ in 0..max_iters {
        let r0: f64 = resp.iter().sum();
        let r1 = n as f64 - r0;
        if r0 < 1.0 || r1 < 1.0 {
            break;
        }
        let pi = [r0 / n as f64, r1 / n as f64];
        let w1: Vec<f64> = resp.iter().map(|r| 1.0 - r).collect();
        let b = [weighted_ls(x, y, &resp), weighted_ls(x, y, &w1)];
        let fitted = [x * &b[0], x * &b[1]];
        let mut ss = 0.0;
        for i in 0..n {
            ss += resp[i] * (y[i] - fitted[0][i]).powi(2) + w1[i] * (y[i] - fitted[1][i]).powi(2);
        }
        let v = (ss / n as f64).max(floor);
        let mut ll = 0.0;
        for i in 0..n {
            let lp: Vec<f64> = (0..2)
                .map(|k| {
                    pi[k].ln()
                        - 0.5 * (y[i] - fitted[k][i]).powi(2) / v
                        - 0.5 * (2.0 * std::f64::consts::PI * v).ln()
                })
                .collect();
            let lse = log_sum_exp(lp[0], lp[1]);
            ll += lse;
            resp[i] = (lp[0] - lse).exp();
        }
        let done = (ll - last).abs() <= tol * (1.0 + ll.abs());
        last = ll;
        if done {
            break;
        }
    }
    (last, resp)
}

/// Coordinates ranked by the sample correlation between `x_j^2` and `y^2`.
/// Opposite-sign groups cancel in the pooled fit but not in second moments.
fn square_screen(x: &Array2<f64>, y: &Array1<f64>, keep: usize) -> Vec<usize> {
    let centred = |v: Array1<f64>| {
        let m = v.mean().unwrap_or(0.0);
        v.mapv(|a| a - m)
    };
    let y2 = centred(y.mapv(|v| v * v));
    let ny = y2.dot(&y2).sqrt();
    let mut scored: Vec<(usize, f64)> = (0..x.ncols())
        .map(|j| {
            let x2 = centred(x.column(j).mapv(|v| v * v));
            let denom = x2.dot(&x2).sqrt() * ny;
            let c = if denom > 0.0 {
                x2.dot(&y2) / denom
            } else {
                0.0
            };
            (j, c.abs())
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut picked: Vec<usize> = scored.into_iter().take(keep).map(|(j, _)| j).collect();
    picked.sort_unstable();
    picked
}

/// Largest number of per-arm orientations tried as regression starts.
const MAX_ARM_SPLITS: usize = 64;

/// Starts that split the rewards at their median within each arm. Groups with
/// different coefficients shift the reward distribution of every arm, but not
/// necessarily in the same direction, so each arm's split is tried in both
/// orientations relative to the first arm.
fn arm_split_starts(y: &Array1<f64>, actions: &[usize]) -> Vec<Vec<usize>> {
    let mut arms: Vec<usize> = actions.to_vec();
    arms.sort_unstable();
    arms.dedup();
    let mut high = vec![0usize; y.len()];
    for &a in &arms {
        let idx: Vec<usize> = (0..y.len()).filter(|&i| actions[i] == a).collect();
        let mut vals: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        vals.sort_by(f64::total_cmp);
        let median = vals[vals.len() / 2];
        for &i in &idx {
            high[i] = usize::from(y[i] < median);
        }
    }
    let flips = arms.len().saturating_sub(1);
    let combos = if flips < usize::BITS as usize && (1usize << flips) <= MAX_ARM_SPLITS {
        1usize << flips
    } else {
        1
    };
    (0..combos)
        .map(|mask| {
            (0..y.len())
                .map(|i| {
                    let pos = arms.binary_search(&actions[i]).unwrap_or(0);
                    let flip = pos > 0 && (mask >> (pos - 1)) & 1 == 1;
                    if flip {
                        1 - high[i]
                    } else {
                        high[i]
                    }
                })
                .collect()
        })
        .collect()
}

/// Best mixture-of-regressions partition over `starts`, if any converged to
/// two nontrivial clusters.
fn best_partition(
    x: &Array2<f64>,
    y: &Array1<f64>,
    coords: &[usize],
    starts: &[Vec<usize>],
    config: &InitConfig,
) -> Option<Vec<usize>> {
    if coords.is_empty() {
        return None;
    }
    let n = y.len();
    let xs = DMatrix::from_fn(n, coords.len(), |i, c| x[[i, coords[c]]]);
    let ys = DVector::from_iterator(n, y.iter().copied());
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in starts {
        let (ll, resp) = mixture_regression(&xs, &ys, start, config.gmm_max_iters, config.gmm_tol);
        if ll.is_finite() && best.as_ref().is_none_or(|(b, _)| ll > *b) {
            best = Some((ll, resp));
        }
    }
    let (_, resp) = best?;
    let refined: Vec<usize> = resp.iter().map(|&r| if r >= 0.5 { 0 } else { 1 }).collect();
    (count_label(&refined, 0) >= 2 && count_label(&refined, 1) >= 2).then_some(refined)
}

/// The `cap` coordinates with the largest `score`, in index order.
fn top_coordinates(candidates: &[usize], score: impl Fn(usize) -> f64, cap: usize) -> Vec<usize> {
    let mut picked = candidates.to_vec();
    picked.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    picked.truncate(cap);
    picked.sort_unstable();
    picked
}

/// Per-cluster LASSO fits on a partition, scored by the cross-validated
/// prediction error summed over both clusters (negated, so larger is
/// better). A wrong partition cannot lower held-out error by fitting noise.
struct PartitionFit {
    score: f64,
    strength: Vec<f64>,
}

fn fit_partition(
    x: &Array2<f64>,
    y: &Array1<f64>,
    labels: &[usize],
    config: &InitConfig,
    rule: &PenaltyRule,
) -> Result<Option<PartitionFit>> {
    let n = y.len();
    // each cluster needs enough samples for cross-validation
    let min_cluster = 2 * DEFAULT_FOLDS;
    if count_label(labels, 0) < min_cluster || count_label(labels, 1) < min_cluster {
        return Ok(None);
    }
    let mut strength = vec![0.0f64; x.ncols()];
    let mut held_out = 0.0;
    for c in 0..2 {
        let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        let problem = WeightedLassoProblem::new(
            x.select(Axis(0), &idx),
            y.select(Axis(0), &idx),
            Array1::ones(idx.len()),
            config.sigma,
            0.0,
        )?;
        let family = CvFamily::Lasso(&problem);
        let grid = default_grid(family);
        let losses = cv_losses(family, DEFAULT_FOLDS, &grid, rule.seed, rule.opts)?;
        let cv_lambda = select_lambda(&grid, &losses)?;
        held_out += losses.iter().copied().fold(f64::INFINITY, f64::min) * idx.len() as f64;
        let beta = match rule.mode {
            LambdaMode::CrossValidation => {
                let problem = problem.with_lambda(cv_lambda)?;
                solve_weighted_lasso(
                    &problem,
                    &Array1::zeros(x.ncols()),
                    rule.opts.tol,
                    rule.opts.max_iters,
                )?
            }
            _ => {
                let (design, response) = (problem.design().clone(), problem.response().clone());
                rule.fit_lasso(
                    design,
                    response,
                    Array1::ones(idx.len()),
                    config.sigma,
                    &Array1::zeros(x.ncols()),
                )?
                .0
            }
        };
        for (s, b) in strength.iter_mut().zip(beta.iter()) {
            *s = s.max(b.abs());
        }
    }
    Ok(Some(PartitionFit {
        score: -held_out,
        strength,
    }))
}

/// Sharpens a clustering with a two-component mixture of linear regressions.
///
/// Candidate partitions (the clustering, per-arm reward splits, and the best
/// mixture regression on the screened coordinates) are compared through
/// per-cluster LASSO fits. The winner is then refined by a mixture
/// regression on the union of its clusters' supports, which picks up
/// coordinates that matter in one group only.
#[allow(clippy::too_many_arguments)]
fn refine_labels(
    x: &Array2<f64>,
    y: &Array1<f64>,
    actions: &[usize],
    pooled: &Array1<f64>,
    support: &[usize],
    gmm_labels: Vec<usize>,
    config: &InitConfig,
    rule: &PenaltyRule,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = y.len();
    // keep the regression small relative to the sample
    let cap = (n / 10).max(1);
    let coords = if support.is_empty() {
        square_screen(x, y, cap.min(10))
    } else {
        top_coordinates(support, |j| pooled[j].abs(), cap)
    };
    let mut candidates = vec![gmm_labels.clone()];
    candidates.extend(arm_split_starts(y, actions));
    let mut starts = candidates.clone();
    let mut rng = rng::stream(derive_seed(seed, 2), streams::INIT);
    for _ in 0..config.gmm_restarts {
        starts.push((0..n).map(|_| rng.random_range(0..2)).collect());
    }
    if let Some(p) = best_partition(x, y, &coords, &starts, config) {
        candidates.push(p);
    }

    let mut best: Option<(PartitionFit, Vec<usize>)> = None;
    for cand in candidates {
        if let Some(fit) = fit_partition(x, y, &cand, config, rule)? {
            if best.as_ref().is_none_or(|(b, _)| fit.score > b.score) {
                best = Some((fit, cand));
            }
        }
    }
    let Some((fit, labels)) = best else {
        // no candidate supports per-cluster fits; fall back to the plain regression
        return Ok(best_partition(x, y, &coords, &starts, config).unwrap_or(gmm_labels));
    };
    let union: Vec<usize> = (0..x.ncols()).filter(|&j| fit.strength[j] > 0.0).collect();
    let coords = top_coordinates(&union, |j| fit.strength[j], cap);
    if let Some(refined) = best_partition(x, y, &coords, std::slice::from_ref(&labels), config) {
        if let Some(refit) = fit_partition(x, y, &refined, config, rule)? {
            if refit.score > fit.score {
                return Ok(refined);
            }
        }
    }
    Ok(labels)
}

fn count_label(labels: &[usize], which: usize) -> usize {
    labels.iter().filter(|&&l| l == which).count()
}

/// Runs the three-stage initializer on `data`.
pub fn initialize(data: &[Interaction], config: &InitConfig, seed: u64) -> Result<InitResult> {
    config.validate()?;
    if data.len() < MIN_SAMPLES {
        return Err(Error::arg(format!(
            "the initializer needs at least {MIN_SAMPLES} samples, got {}",
            data.len()
        )));
    }
    let d_x = data[0].context.d_x();
    let d_z = data[0].context.d_z();
    if data
        .iter()
        .any(|it| it.context.d_x() != d_x || it.context.d_z() != d_z)
    {
        return Err(Error::arg(
            "interactions have inconsistent feature dimensions",
        ));
    }
    let n = data.len();
    let (x, z, y) = design_matrices(data);
    let rule = PenaltyRule {
        mode: config.screen_lambda_mode,
        folds: DEFAULT_FOLDS,
        seed: derive_seed(seed, 0),
        opts: SolverOptions::default(),
        scheduled: None,
    };

    // stage 1: screening
    let zeros = Array1::zeros(d_x);
    let (pooled, _) =
        rule.fit_lasso(x.clone(), y.clone(), Array1::ones(n), config.sigma, &zeros)?;
    let mut support: Vec<usize> = (0..d_x).filter(|&j| pooled[j] != 0.0).collect();

    // stage 2: clustering
    let mut points = Array2::zeros((n, 1 + support.len()));
    points.column_mut(0).assign(&y);
    for (c, &j) in support.iter().enumerate() {
        points.column_mut(c + 1).assign(&x.column(j));
    }
    standardize(&mut points);
    let gmm = fit_gmm(
        &points,
        config.gmm_restarts,
        config.gmm_max_iters,
        config.gmm_tol,
        derive_seed(seed, 1),
    )?;
    let mut labels = gmm.labels();

    if config.refine {
        let actions: Vec<usize> = data.iter().map(|it| it.action).collect();
        labels = refine_labels(
            &x, &y, &actions, &pooled, &support, labels, config, &rule, seed,
        )?;
    }

    let degenerate = count_label(&labels, 0) < 2 || count_label(&labels, 1) < 2;
    if degenerate {
        let sigma = if config.estimate_sigma {
            let r = &y - &x.dot(&pooled);
            (r.dot(&r) / n as f64).sqrt()
        } else {
            config.sigma
        };
        let params =
            ModelParams::new(Array1::zeros(d_z), pooled.clone(), pooled, sigma.max(1e-12))?;
        support.shrink_to_fit();
        return Ok(InitResult {
            params,
            labels: vec![Group::One; n],
            support,
            gmm_log_likelihood: gmm.log_likelihood,
            degenerate: true,
        });
    }

    // stage 3: per-cluster LASSOs, orientation, gating fit
    let mut betas = Vec::with_capacity(2);
    let mut sse = 0.0;
    for c in 0..2 {
        let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        let xc = x.select(Axis(0), &idx);
        let yc = y.select(Axis(0), &idx);
        let (beta, _) = rule.fit_lasso(
            xc.clone(),
            yc.clone(),
            Array1::ones(idx.len()),
            config.sigma,
            &zeros,
        )?;
        let r = &yc - &xc.dot(&beta);
        sse += r.dot(&r);
        betas.push(beta);
    }
    let first_is_one = orient(&betas[0], &betas[1], labels[0] == 0);
    let (one, two) = if first_is_one { (0, 1) } else { (1, 0) };
    let indicator: Array1<f64> = labels
        .iter()
        .map(|&l| if l == one { 1.0 } else { 0.0 })
        .collect();
    let (theta, _) = rule.fit_logistic(
        LogisticProblem::new(z, indicator, 0.0)?,
        &Array1::zeros(d_z),
    )?;
    let sigma = if config.estimate_sigma {
        (sse / n as f64).sqrt().max(1e-12)
    } else {
        config.sigma
    };
    let beta_two = betas.swap_remove(two.max(one));
    let beta_one = betas.swap_remove(0);
    let (beta1, beta2) = if one == 0 {
        (beta_one, beta_two)
    } else {
        (beta_two, beta_one)
    };
    let params = ModelParams::new(theta, beta1, beta2, sigma)?;
    let labels = labels
        .iter()
        .map(|&l| if l == one { Group::One } else { Group::Two })
        .collect();
    Ok(InitResult {
        params,
        labels,
        support,
        gmm_log_likelihood: gmm.log_likelihood,
        degenerate: false,
    })
}

/// Whether cluster `a` is group 1: the larger value at the first coordinate
/// where either vector is nonzero, then the larger l2 norm, then the cluster
/// holding sample 0.
fn orient(a: &Array1<f64>, b: &Array1<f64>, a_holds_first_sample: bool) -> bool {
    if let Some(j) = (0..a.len()).find(|&j| a[j] != 0.0 || b[j] != 0.0) {
        if a[j] != b[j] {
            return a[j] > b[j];
        }
    }
    let (na, nb) = (a.dot(a), b.dot(b));
    if na != nb {
        return na > nb;
    }
    a_holds_first_sample
}
