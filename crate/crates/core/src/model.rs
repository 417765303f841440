//! The two-group mixed linear reward model with logistic gating.
//!
//! A customer with gating features `z` belongs to group 1 with probability
//! `sigmoid(z . theta)` and to group 2 otherwise. Pulling arm `k` with features
//! `x_k` yields `x_k . beta_g + eps`, `eps ~ N(0, sigma^2)`.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latent group label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    One,
    Two,
}

impl Group {
    /// 1 or 2.
    pub fn label(self) -> u8 {
        match self {
            Group::One => 1,
            Group::Two => 2,
        }
    }

    pub fn from_label(label: u8) -> Result<Self> {
        match label {
            1 => Ok(Group::One),
            2 => Ok(Group::Two),
            other => Err(Error::arg(format!(
                "group label must be 1 or 2, got {other}"
            ))),
        }
    }

    pub fn other(self) -> Self {
        match self {
            Group::One => Group::Two,
            Group::Two => Group::One,
        }
    }
}

/// Parameter triple `(theta, beta1, beta2)` together with the noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    theta: Array1<f64>,
    beta1: Array1<f64>,
    beta2: Array1<f64>,
    sigma: f64,
}

impl ModelParams {
    pub fn new(
        theta: Array1<f64>,
        beta1: Array1<f64>,
        beta2: Array1<f64>,
        sigma: f64,
    ) -> Result<Self> {
        if beta1.len() != beta2.len() {
            return Err(Error::dim("beta2", beta1.len(), beta2.len()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::arg(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        let finite = |v: &Array1<f64>| v.iter().all(|x| x.is_finite());
        if !(finite(&theta) && finite(&beta1) && finite(&beta2)) {
            return Err(Error::arg("model parameters must be finite"));
        }
        Ok(Self {
            theta,
            beta1,
            beta2,
            sigma,
        })
    }

    /// `theta = 0`, `beta1 = beta2 = 0`.
    pub fn zeros(d_z: usize, d_x: usize, sigma: f64) -> Result<Self> {
        Self::new(
            Array1::zeros(d_z),
            Array1::zeros(d_x),
            Array1::zeros(d_x),
            sigma,
        )
    }

    pub fn theta(&self) -> &Array1<f64> {
        &self.theta
    }

    pub fn beta1(&self) -> &Array1<f64> {
        &self.beta1
    }

    pub fn beta2(&self) -> &Array1<f64> {
        &self.beta2
    }

    pub fn beta(&self, group: Group) -> &Array1<f64> {
        match group {
            Group::One => &self.beta1,
            Group::Two => &self.beta2,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn d_z(&self) -> usize {
        self.theta.len()
    }

    pub fn d_x(&self) -> usize {
        self.beta1.len()
    }

    /// Number of nonzero coordinates across all three blocks.
    pub fn nnz(&self) -> usize {
        [&self.theta, &self.beta1, &self.beta2]
            .iter()
            .map(|v| v.iter().filter(|x| **x != 0.0).count())
            .sum()
    }

    /// The same model under the opposite labeling: `(-theta, beta2, beta1)`.
    pub fn swapped(&self) -> Self {
        Self {
            theta: -&self.theta,
            beta1: self.beta2.clone(),
            beta2: self.beta1.clone(),
            sigma: self.sigma,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::arg(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        self.sigma = sigma;
        Ok(self)
    }
}

/// One arrival: gating features and one feature row per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    z: Array1<f64>,
    arms: Array2<f64>,
}

impl Context {
    pub fn new(z: Array1<f64>, arms: Array2<f64>) -> Result<Self> {
        if arms.nrows() == 0 {
            return Err(Error::arg("a context needs at least one arm"));
        }
        Ok(Self { z, arms })
    }

    pub fn from_rows(z: Vec<f64>, arms: Vec<Vec<f64>>) -> Result<Self> {
        let k = arms.len();
        let d = arms.first().map_or(0, Vec::len);
        if arms.iter().any(|a| a.len() != d) {
            return Err(Error::arg("all arm feature vectors must share one length"));
        }
        let flat: Vec<f64> = arms.into_iter().flatten().collect();
        let arms = Array2::from_shape_vec((k, d), flat).map_err(|e| Error::arg(e.to_string()))?;
        Self::new(Array1::from(z), arms)
    }

    pub fn z(&self) -> &Array1<f64> {
        &self.z
    }

    pub fn arms(&self) -> &Array2<f64> {
        &self.arms
    }

    pub fn arm(&self, k: usize) -> ArrayView1<'_, f64> {
        self.arms.row(k)
    }

    pub fn num_arms(&self) -> usize {
        self.arms.nrows()
    }

    pub fn d_x(&self) -> usize {
        self.arms.ncols()
    }

    pub fn d_z(&self) -> usize {
        self.z.len()
    }
}

/// One logged round.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub context: Context,
    pub action: usize,
    pub reward: f64,
    /// Realized group, known only for simulated or labeled data.
    pub group: Option<Group>,
}

impl Interaction {
    pub fn new(context: Context, action: usize, reward: f64, group: Option<Group>) -> Result<Self> {
        if action >= context.num_arms() {
            return Err(Error::arg(format!(
                "action {action} out of range for {} arms",
                context.num_arms()
            )));
        }
        Ok(Self {
            context,
            action,
            reward,
            group,
        })
    }

    /// Features of the arm that was pulled.
    pub fn x(&self) -> ArrayView1<'_, f64> {
        self.context.arm(self.action)
    }

    pub fn z(&self) -> &Array1<f64> {
        self.context.z()
    }
}

/// Logistic function, evaluated on the branch that cannot overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.dot(&b)
}

fn checked_dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, what: &str) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(what, b.len(), a.len()));
    }
    Ok(dot(a, b))
}

/// `P(g = 1 | z) = sigmoid(z . theta)`.
pub fn group_probability(z: ArrayView1<'_, f64>, theta: ArrayView1<'_, f64>) -> Result<f64> {
    Ok(sigmoid(checked_dot(z, theta, "gating features")?))
}

/// Noiseless reward `x . beta`.
pub fn mean_reward(x: ArrayView1<'_, f64>, beta: ArrayView1<'_, f64>) -> Result<f64> {
    checked_dot(x, beta, "arm features")
}

/// Log-odds that the observation belongs to group 1.
///
/// Adding the gating score to the difference of the two Gaussian exponents
/// avoids ever forming the densities themselves.
pub(crate) fn posterior_log_odds(
    y: f64,
    x: ArrayView1<'_, f64>,
    z: ArrayView1<'_, f64>,
    params: &ModelParams,
) -> f64 {
    let score = dot(z, params.theta.view());
    let r1 = y - dot(x, params.beta1.view());
    let r2 = y - dot(x, params.beta2.view());
    let two_var = 2.0 * params.sigma * params.sigma;
    score + (r2 * r2 - r1 * r1) / two_var
}

/// Posterior probability that `(y, x, z)` came from group 1.
pub fn posterior_weight(
    y: f64,
    x: ArrayView1<'_, f64>,
    z: ArrayView1<'_, f64>,
    params: &ModelParams,
) -> Result<f64> {
    if x.len() != params.d_x() {
        return Err(Error::dim("arm features", params.d_x(), x.len()));
    }
    if z.len() != params.d_z() {
        return Err(Error::dim("gating features", params.d_z(), z.len()));
    }
    Ok(sigmoid(posterior_log_odds(y, x, z, params)))
}

/// Bayes classifier: group 1 iff `z . theta >= 0`.
pub fn classify(z: ArrayView1<'_, f64>, theta: ArrayView1<'_, f64>) -> Result<Group> {
    Ok(classify_score(checked_dot(z, theta, "gating features")?))
}

pub(crate) fn classify_score(score: f64) -> Group {
    if score >= 0.0 {
        Group::One
    } else {
        Group::Two
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax_lowest(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (k, v) in values.into_iter().enumerate() {
        if v > best_val {
            best = k;
            best_val = v;
        }
    }
    best
}

/// Greedy arm for a coefficient vector, lowest index on ties.
pub fn greedy_arm(context: &Context, beta: ArrayView1<'_, f64>) -> usize {
    argmax_lowest(context.arms.rows().into_iter().map(|x| dot(x, beta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn naive_weight(y: f64, x: &Array1<f64>, z: &Array1<f64>, p: &ModelParams) -> f64 {
        let phi = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let s = z.dot(&p.theta);
        // both gating probabilities evaluated directly so neither loses digits
        let prob = 1.0 / (1.0 + (-s).exp());
        let prob_c = 1.0 / (1.0 + s.exp());
        let f1 = phi((y - x.dot(&p.beta1)) / p.sigma);
        let f2 = phi((y - x.dot(&p.beta2)) / p.sigma);
        prob * f1 / (prob * f1 + prob_c * f2)
    }

    #[test]
    fn sigmoid_reference_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(40.0) - 1.0).abs() <= 1e-15);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() <= 1e-15);
        assert!(sigmoid(-700.0) > 0.0 && sigmoid(-700.0) < 1e-300);
        assert_eq!(sigmoid(700.0), 1.0);
    }

    #[test]
    fn group_probability_examples() {
        let z = array![0.3, -2.0];
        assert_eq!(
            group_probability(z.view(), array![0.0, 0.0].view()).unwrap(),
            0.5
        );
        let p = group_probability(array![1.0, 0.0].view(), array![3f64.ln(), 5.0].view()).unwrap();
        assert!((p - 0.75).abs() < 1e-15);
        let p = group_probability(array![-1.0].view(), array![40.0].view()).unwrap();
        assert!(p <= 1e-17);
        assert!(group_probability(array![1.0].view(), array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn mean_reward_examples() {
        assert_eq!(
            mean_reward(array![0.0, 0.0].view(), array![4.0, 5.0].view()).unwrap(),
            0.0
        );
        assert_eq!(
            mean_reward(array![1.0, 2.0].view(), array![3.0, -1.0].view()).unwrap(),
            1.0
        );
        let beta = array![0.5, -7.0, 2.5];
        assert_eq!(
            mean_reward(array![0.0, 1.0, 0.0].view(), beta.view()).unwrap(),
            -7.0
        );
        assert!(mean_reward(array![1.0].view(), beta.view()).is_err());
    }

    #[test]
    fn posterior_weight_examples() {
        let theta = array![0.7, -1.2];
        let beta = array![1.0, 2.0, -3.0];
        let p = ModelParams::new(theta.clone(), beta.clone(), beta, 0.8).unwrap();
        let z = array![0.4, 0.9];
        let w = posterior_weight(5.0, array![1.0, 1.0, 1.0].view(), z.view(), &p).unwrap();
        assert_eq!(w, group_probability(z.view(), theta.view()).unwrap());

        // x.beta1 - x.beta2 = 10 and y = x.beta1 gives log-odds 50.
        let p = ModelParams::new(array![0.0], array![10.0], array![0.0], 1.0).unwrap();
        let w = posterior_weight(10.0, array![1.0].view(), array![3.0].view(), &p).unwrap();
        assert!((w - 1.0 / (1.0 + (-50.0f64).exp())).abs() < 1e-15);

        let p = ModelParams::new(array![40.0], array![1.0], array![0.0], 1.0).unwrap();
        // residual exponents differ by at most 4.5 here
        let w = posterior_weight(1.0, array![2.0].view(), array![-1.0].view(), &p).unwrap();
        assert!(w <= 1e-15);
    }

    #[test]
    fn posterior_weight_rejects_bad_dims() {
        let p = ModelParams::new(array![0.0], array![1.0], array![0.0], 1.0).unwrap();
        assert!(posterior_weight(0.0, array![1.0, 2.0].view(), array![1.0].view(), &p).is_err());
        assert!(ModelParams::new(array![0.0], array![1.0], array![0.0], 0.0).is_err());
        assert!(ModelParams::new(array![0.0], array![1.0], array![0.0], -1.0).is_err());
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify(array![1.0, 1.0].view(), array![1.0, -1.0].view()).unwrap(),
            Group::One
        );
        assert_eq!(
            classify(array![1.0].view(), array![-2.0].view()).unwrap(),
            Group::Two
        );
        for z in [-3.0, 0.0, 8.0] {
            assert_eq!(
                classify(array![z].view(), array![0.0].view()).unwrap(),
                Group::One
            );
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_lowest([1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax_lowest([2.0, 2.0]), 0);
    }

    fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5.0..5.0f64, n)
    }

    proptest! {
        #[test]
        fn weight_in_unit_interval_and_swap_symmetric(
            y in -30.0..30.0f64,
            x in vec_strategy(3),
            z in vec_strategy(2),
            theta in vec_strategy(2),
            b1 in vec_strategy(3),
            b2 in vec_strategy(3),
            sigma in 0.05..5.0f64,
        ) {
            let (x, z) = (Array1::from(x), Array1::from(z));
            let p = ModelParams::new(theta.into(), b1.into(), b2.into(), sigma).unwrap();
            let w = posterior_weight(y, x.view(), z.view(), &p).unwrap();
            prop_assert!((0.0..=1.0).contains(&w));
            let ws = posterior_weight(y, x.view(), z.view(), &p.swapped()).unwrap();
            prop_assert!((w + ws - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn log_space_matches_density_ratio(
            y in -3.0..3.0f64,
            x in vec_strategy(3),
            z in vec_strategy(2),
            theta in vec_strategy(2),
            b1 in proptest::collection::vec(-1.0..1.0f64, 3),
            b2 in proptest::collection::vec(-1.0..1.0f64, 3),
            sigma in 0.5..3.0f64,
        ) {
            let (x, z) = (Array1::from(x), Array1::from(z));
            let p = ModelParams::new(theta.into(), b1.into(), b2.into(), sigma).unwrap();
            let density = |b: &Array1<f64>| (-0.5 * ((y - x.dot(b)) / sigma).powi(2)).exp();
            prop_assume!(density(p.beta1()) > 1e-300 && density(p.beta2()) > 1e-300);
            let w = posterior_weight(y, x.view(), z.view(), &p).unwrap();
            prop_assert!((w - naive_weight(y, &x, &z, &p)).abs() <= 1e-12);
        }

        #[test]
        fn classify_is_scale_invariant(z in vec_strategy(4), theta in vec_strategy(4), c in 1e-3..1e3f64) {
            let (z, theta) = (Array1::from(z), Array1::from(theta));
            let scaled = &theta * c;
            prop_assert_eq!(
                classify(z.view(), theta.view()).unwrap(),
                classify(z.view(), scaled.view()).unwrap()
            );
        }
    }
}
