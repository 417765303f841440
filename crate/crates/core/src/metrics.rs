//! Regret accounting, Bayes misclassification risk and permutation-invariant
//! estimation error.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    argmax_lowest, classify, classify_score, group_probability, Context, Group, ModelParams,
};
use crate::rng::{self, streams, StreamRng};

fn arm_values(context: &Context, beta: &Array1<f64>) -> Array1<f64> {
    context.arms().dot(beta)
}

/// Best achievable mean reward minus the chosen arm's, under the realized group.
pub fn instant_strong_regret(
    context: &Context,
    group: Group,
    chosen: usize,
    truth: &ModelParams,
) -> f64 {
    let values = arm_values(context, truth.beta(group));
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    best - values[chosen]
}

/// The arm the regular oracle plays: greedy under the Bayes-classified group.
pub fn regular_oracle_arm(context: &Context, truth: &ModelParams) -> usize {
    let g = classify_score(context.z().dot(truth.theta()));
    let values = arm_values(context, truth.beta(g));
    argmax_lowest(values.iter().copied())
}

/// Mean reward of the regular oracle's arm minus the chosen arm's, both under
/// the realized group. Negative when the oracle misclassifies and the learner
/// does not.
pub fn instant_regular_regret(
    context: &Context,
    group: Group,
    chosen: usize,
    truth: &ModelParams,
) -> f64 {
    let values = arm_values(context, truth.beta(group));
    values[regular_oracle_arm(context, truth)] - values[chosen]
}

/// Strong-oracle value minus regular-oracle value: the per-round gap between
/// the two regrets, always nonnegative.
pub fn oracle_gap(context: &Context, group: Group, truth: &ModelParams) -> f64 {
    let values = arm_values(context, truth.beta(group));
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    best - values[regular_oracle_arm(context, truth)]
}

/// Monte Carlo mean of `min(p, 1 - p)` with `p = sigmoid(z . theta)` over
/// seeded draws from `sampler`.
pub fn bayes_risk<F>(
    theta: &Array1<f64>,
    mut sampler: F,
    n_samples: usize,
    seed: u64,
) -> Result<f64>
where
    F: FnMut(&mut StreamRng) -> Array1<f64>,
{
    if n_samples == 0 {
        return Err(Error::arg("n_samples must be positive"));
    }
    let mut rng = rng::stream(seed, streams::METRICS);
    let mut total = 0.0;
    for _ in 0..n_samples {
        let z = sampler(&mut rng);
        let p = group_probability(z.view(), theta.view())?;
        total += p.min(1.0 - p);
    }
    Ok(total / n_samples as f64)
}

/// Excess misclassification of `theta_hat` over `theta_star` with common
/// random numbers: per draw the cost is `|2p - 1|` when the two classifiers
/// disagree and zero otherwise, so identical classifiers give exactly zero.
pub fn excess_misclassification<F>(
    theta_hat: &Array1<f64>,
    theta_star: &Array1<f64>,
    mut sampler: F,
    n_samples: usize,
    seed: u64,
) -> Result<f64>
where
    F: FnMut(&mut StreamRng) -> Array1<f64>,
{
    if n_samples == 0 {
        return Err(Error::arg("n_samples must be positive"));
    }
    if theta_hat.len() != theta_star.len() {
        return Err(Error::dim("theta", theta_star.len(), theta_hat.len()));
    }
    let mut rng = rng::stream(seed, streams::METRICS);
    let mut total = 0.0;
    for _ in 0..n_samples {
        let z = sampler(&mut rng);
        if classify(z.view(), theta_hat.view())? != classify(z.view(), theta_star.view())? {
            let p = group_probability(z.view(), theta_star.view())?;
            total += (2.0 * p - 1.0).abs();
        }
    }
    Ok(total / n_samples as f64)
}

/// How the label-swap ambiguity is resolved in [`estimation_error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationMode {
    /// One swap for everything: `(beta1, beta2, theta) -> (beta2, beta1, -theta)`.
    #[default]
    Joint,
    /// The coefficient pair and the gating vector minimize over the swap separately.
    PerBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationError {
    pub l2: f64,
    pub l1: f64,
    /// Whether the swapped labeling won (for the coefficient pair in per-block mode).
    pub swapped: bool,
}

fn norm2(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, sign: f64) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - sign * y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn norm1(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, sign: f64) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - sign * y).abs())
        .sum()
}

/// Sum of the three block errors, minimized over the label swap (decided by
/// the l2 total; the l1 total is reported under the same labeling).
pub fn estimation_error(estimate: &ModelParams, truth: &ModelParams) -> Result<EstimationError> {
    estimation_error_with(estimate, truth, PermutationMode::Joint)
}

pub fn estimation_error_with(
    estimate: &ModelParams,
    truth: &ModelParams,
    mode: PermutationMode,
) -> Result<EstimationError> {
    if estimate.d_x() != truth.d_x() {
        return Err(Error::dim("coefficients", truth.d_x(), estimate.d_x()));
    }
    if estimate.d_z() != truth.d_z() {
        return Err(Error::dim("gating vector", truth.d_z(), estimate.d_z()));
    }
    let (b1, b2, th) = (
        estimate.beta1().view(),
        estimate.beta2().view(),
        estimate.theta().view(),
    );
    let (s1, s2, st) = (
        truth.beta1().view(),
        truth.beta2().view(),
        truth.theta().view(),
    );
    let beta_id = |n: fn(ArrayView1<'_, f64>, ArrayView1<'_, f64>, f64) -> f64| {
        n(b1, s1, 1.0) + n(b2, s2, 1.0)
    };
    let beta_sw = |n: fn(ArrayView1<'_, f64>, ArrayView1<'_, f64>, f64) -> f64| {
        n(b1, s2, 1.0) + n(b2, s1, 1.0)
    };
    match mode {
        PermutationMode::Joint => {
            let id = beta_id(norm2) + norm2(th, st, 1.0);
            let sw = beta_sw(norm2) + norm2(th, st, -1.0);
            let swapped = sw < id;
            let l1 = if swapped {
                beta_sw(norm1) + norm1(th, st, -1.0)
            } else {
                beta_id(norm1) + norm1(th, st, 1.0)
            };
            Ok(EstimationError {
                l2: id.min(sw),
                l1,
                swapped,
            })
        }
        PermutationMode::PerBlock => {
            let (bid, bsw) = (beta_id(norm2), beta_sw(norm2));
            let swapped = bsw < bid;
            let beta_l1 = if swapped {
                beta_sw(norm1)
            } else {
                beta_id(norm1)
            };
            let (tid, tsw) = (norm2(th, st, 1.0), norm2(th, st, -1.0));
            let theta_l1 = if tsw < tid {
                norm1(th, st, -1.0)
            } else {
                norm1(th, st, 1.0)
            };
            Ok(EstimationError {
                l2: bid.min(bsw) + tid.min(tsw),
                l1: beta_l1 + theta_l1,
                swapped,
            })
        }
    }
}

/// One logged round of a regret trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    pub episode: usize,
    pub strong: f64,
    pub regular: f64,
    /// Strong-oracle value minus regular-oracle value this round.
    pub gap: f64,
    pub arm: usize,
    pub group: Group,
    pub classified: Group,
}

/// Per-round records with running cumulative regrets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretTrace {
    records: Vec<RoundRecord>,
    strong_cum: Vec<f64>,
    regular_cum: Vec<f64>,
}

impl RegretTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            records: Vec::with_capacity(n),
            strong_cum: Vec::with_capacity(n),
            regular_cum: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, record: RoundRecord) {
        let s = self.strong_cum.last().copied().unwrap_or(0.0) + record.strong;
        let r = self.regular_cum.last().copied().unwrap_or(0.0) + record.regular;
        self.records.push(record);
        self.strong_cum.push(s);
        self.regular_cum.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn strong_cumulative(&self) -> &[f64] {
        &self.strong_cum
    }

    pub fn regular_cumulative(&self) -> &[f64] {
        &self.regular_cum
    }

    /// Running average `Reg(t) / t` of the strong regret at 1-based round `t`.
    pub fn strong_average(&self, t: usize) -> f64 {
        self.strong_cum[t - 1] / t as f64
    }

    pub fn regular_average(&self, t: usize) -> f64 {
        self.regular_cum[t - 1] / t as f64
    }

    /// Mean instant regrets `(strong, regular)` over the rounds of `episode`,
    /// or `None` when the episode has no rounds.
    pub fn episode_means(&self, episode: usize) -> Option<(f64, f64)> {
        let mut count = 0usize;
        let (mut s, mut r) = (0.0, 0.0);
        for rec in self.records.iter().filter(|rec| rec.episode == episode) {
            count += 1;
            s += rec.strong;
            r += rec.regular;
        }
        (count > 0).then(|| (s / count as f64, r / count as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// The two-arm construction with `L = x_bar = 1` and base draw `x1`.
    fn lower_bound_round(x1: f64) -> (Context, ModelParams) {
        let ctx = Context::new(array![0.0], array![[x1 + 0.5], [x1 - 0.5]]).unwrap();
        let truth = ModelParams::new(array![0.0], array![1.0], array![-1.0], 1.0).unwrap();
        (ctx, truth)
    }

    #[test]
    fn strong_regret_examples() {
        let (ctx, truth) = lower_bound_round(0.2);
        assert_eq!(instant_strong_regret(&ctx, Group::One, 0, &truth), 0.0);
        assert!((instant_strong_regret(&ctx, Group::One, 1, &truth) - 1.0).abs() < 1e-15);
        let single = Context::new(array![1.0], array![[3.0]]).unwrap();
        let t1 = ModelParams::new(array![1.0], array![2.0], array![-5.0], 1.0).unwrap();
        assert_eq!(instant_strong_regret(&single, Group::Two, 0, &t1), 0.0);
    }

    #[test]
    fn regular_regret_examples() {
        let (ctx, truth) = lower_bound_round(0.2);
        // theta = 0 classifies every context as group 1, whose best arm is arm 1
        assert_eq!(regular_oracle_arm(&ctx, &truth), 0);
        let v = instant_regular_regret(&ctx, Group::Two, 1, &truth);
        assert!((v - (-1.0)).abs() < 1e-15, "{v}");
        assert_eq!(instant_regular_regret(&ctx, Group::Two, 0, &truth), 0.0);
    }

    #[test]
    fn regret_decomposition_is_exact_and_nonnegative() {
        let mut rng = rng::stream(3, 1);
        let truth = ModelParams::new(
            array![0.7, -0.4],
            array![1.0, 0.5, 0.0],
            array![-0.3, 0.2, 1.1],
            1.0,
        )
        .unwrap();
        for _ in 0..2000 {
            let z = Array1::from_iter((0..2).map(|_| StandardNormal.sample(&mut rng)));
            let arms = ndarray::Array2::from_shape_fn((3, 3), |_| StandardNormal.sample(&mut rng));
            let ctx = Context::new(z, arms).unwrap();
            let g = if rng.random::<bool>() {
                Group::One
            } else {
                Group::Two
            };
            let chosen = rng.random_range(0..3);
            let s = instant_strong_regret(&ctx, g, chosen, &truth);
            let r = instant_regular_regret(&ctx, g, chosen, &truth);
            let gap = oracle_gap(&ctx, g, &truth);
            assert!(s >= 0.0 && gap >= 0.0);
            // both sides are differences against the same chosen value
            let values = ctx.arms().dot(truth.beta(g));
            let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let oracle = values[regular_oracle_arm(&ctx, &truth)];
            assert_eq!(s, best - values[chosen]);
            assert_eq!(r, oracle - values[chosen]);
            assert_eq!(gap, best - oracle);
            if classify(ctx.z().view(), truth.theta().view()).unwrap() != g {
                let own = argmax_lowest(values.iter().copied());
                assert!(instant_regular_regret(&ctx, g, own, &truth) <= 0.0);
            }
        }
    }

    #[test]
    fn bayes_risk_examples() {
        let normal =
            |r: &mut StreamRng| Array1::from_iter((0..3).map(|_| StandardNormal.sample(r)));
        assert_eq!(bayes_risk(&Array1::zeros(3), normal, 1000, 1).unwrap(), 0.5);
        let atoms = |r: &mut StreamRng| array![if r.random::<bool>() { 1.0 } else { -1.0 }];
        let v = bayes_risk(&array![3f64.ln()], atoms, 500, 2).unwrap();
        assert!((v - 0.25).abs() < 1e-15, "{v}");
        let mut draw = rng::stream(9, streams::METRICS);
        let z1: Array1<f64> = normal(&mut draw);
        let p = group_probability(z1.view(), array![0.3, -1.0, 2.0].view()).unwrap();
        let single = bayes_risk(&array![0.3, -1.0, 2.0], normal, 1, 9).unwrap();
        assert_eq!(single, p.min(1.0 - p));
        assert!(bayes_risk(&Array1::zeros(3), normal, 0, 1).is_err());
    }

    #[test]
    fn excess_misclassification_examples() {
        let normal =
            |r: &mut StreamRng| Array1::from_iter((0..2).map(|_| StandardNormal.sample(r)));
        let theta = array![0.8, -1.5];
        assert_eq!(
            excess_misclassification(&theta, &theta, normal, 2000, 4).unwrap(),
            0.0
        );
        assert_eq!(
            excess_misclassification(&(&theta * 3.5), &theta, normal, 2000, 4).unwrap(),
            0.0
        );
        let atoms = |r: &mut StreamRng| array![if r.random::<bool>() { 1.0 } else { -1.0 }];
        let t = array![3f64.ln()];
        let v = excess_misclassification(&-&t, &t, atoms, 1000, 5).unwrap();
        assert!((v - 0.5).abs() < 1e-15, "{v}");
    }

    #[test]
    fn estimation_error_examples() {
        let truth = ModelParams::new(
            array![0.5, -1.0],
            array![1.0, 0.0, 2.0],
            array![0.0, -3.0, 1.0],
            1.0,
        )
        .unwrap();
        let e = estimation_error(&truth, &truth).unwrap();
        assert_eq!((e.l2, e.l1, e.swapped), (0.0, 0.0, false));
        let e = estimation_error(&truth.swapped(), &truth).unwrap();
        assert_eq!((e.l2, e.swapped), (0.0, true));
        let mut b1 = truth.beta1().clone();
        b1[0] += 1.0;
        let est = ModelParams::new(truth.theta().clone(), b1, truth.beta2().clone(), 1.0).unwrap();
        let e = estimation_error(&est, &truth).unwrap();
        assert_eq!((e.l2, e.l1), (1.0, 1.0));
        let other = ModelParams::zeros(2, 4, 1.0).unwrap();
        assert!(estimation_error(&other, &truth).is_err());
    }

    #[test]
    fn estimation_error_is_permutation_invariant() {
        let mut rng = rng::stream(8, 2);
        let mut random =
            |n: usize| Array1::from_iter((0..n).map(|_| StandardNormal.sample(&mut rng)));
        for _ in 0..100 {
            let est = ModelParams::new(random(3), random(4), random(4), 1.0).unwrap();
            let truth = ModelParams::new(random(3), random(4), random(4), 1.0).unwrap();
            for mode in [PermutationMode::Joint, PermutationMode::PerBlock] {
                let a = estimation_error_with(&est, &truth, mode).unwrap();
                let b = estimation_error_with(&est.swapped(), &truth.swapped(), mode).unwrap();
                assert!((a.l2 - b.l2).abs() < 1e-12);
                assert!(
                    estimation_error_with(&est, &truth, PermutationMode::PerBlock)
                        .unwrap()
                        .l2
                        <= estimation_error(&est, &truth).unwrap().l2 + 1e-12
                );
            }
        }
    }

    #[test]
    fn trace_prefix_sums_and_averages() {
        let mut trace = RegretTrace::new();
        for i in 0..10 {
            trace.push(RoundRecord {
                round: i + 1,
                episode: usize::from(i >= 4),
                strong: i as f64 * 0.5,
                regular: 1.0 - i as f64 * 0.25,
                gap: 0.0,
                arm: 0,
                group: Group::One,
                classified: Group::One,
            });
        }
        let mut acc = 0.0;
        for (rec, &c) in trace.records().iter().zip(trace.strong_cumulative()) {
            acc += rec.strong;
            assert_eq!(acc, c);
        }
        assert_eq!(trace.strong_average(4), (0.0 + 0.5 + 1.0 + 1.5) / 4.0);
        assert_eq!(trace.episode_means(0).unwrap().0, 0.75);
        assert!(trace.episode_means(5).is_none());
    }
}
