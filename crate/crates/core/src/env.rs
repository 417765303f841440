//! Seeded simulators.
//!
//! All three environments share [`SimulatedEnv`]: a [`GroundTruth`] (model
//! parameters plus a feature distribution) driven by four independent random
//! streams for gating features, arm features, group draws and noise. Changing
//! the number of arms only changes how much of the arm stream is consumed, so
//! group and noise sequences stay put.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::em::{LambdaMode, PenaltyRule};
use crate::error::{Error, Result};
use crate::model::{sigmoid, Context, Group, ModelParams};
use crate::rng::{self, streams, StreamRng};
use crate::sparse::{LogisticProblem, SolverOptions, DEFAULT_FOLDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub d: usize,
    pub d_z: usize,
    pub s: usize,
    pub k: usize,
    pub l_bar: f64,
    pub sigma: f64,
    pub rho: f64,
    pub mu_gap: f64,
    pub theta_nnz: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            d: 500,
            d_z: 50,
            s: 20,
            k: 2,
            l_bar: 2.5,
            sigma: 1.0,
            rho: 0.5,
            mu_gap: 1.0,
            theta_nnz: 10,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d_z == 0 || self.s == 0 || self.k == 0 || self.theta_nnz == 0 {
            return Err(Error::arg("d, d_z, s, k and theta_nnz must be positive"));
        }
        if self.s > self.d {
            return Err(Error::arg(format!("s = {} exceeds d = {}", self.s, self.d)));
        }
        if self.theta_nnz > self.d_z {
            return Err(Error::arg(format!(
                "theta_nnz = {} exceeds d_z = {}",
                self.theta_nnz, self.d_z
            )));
        }
        if self.d / 2 + self.s > self.d {
            return Err(Error::arg(format!(
                "the group-2 support d/2 + s = {} does not fit in d = {}",
                self.d / 2 + self.s,
                self.d
            )));
        }
        if !(self.l_bar > 0.0 && self.sigma > 0.0) {
            return Err(Error::arg("l_bar and sigma must be positive"));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::arg("rho must lie in (-1, 1)"));
        }
        Ok(())
    }
}

/// How contexts are generated.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureModel {
    /// `x_k ~ N(mu_k, L L^T)`, `z ~ N(0, I)`. `ar1` carries the correlation
    /// when `L` is the Cholesky factor of an AR(1) matrix, which lets sampling
    /// use the O(d) recursion instead of a triangular product.
    Gaussian {
        arm_means: Vec<Array1<f64>>,
        arm_cov_chol: Array2<f64>,
        ar1: Option<f64>,
    },
    /// Two arms sharing a uniform base vector shifted by `+-x_bar/2`.
    LowerBound { x_bar: f64, d: usize },
    /// Rows resampled with replacement from a table.
    Bootstrap {
        z_rows: Array2<f64>,
        arm_rows: Vec<Array2<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub params: ModelParams,
    pub features: FeatureModel,
}

impl GroundTruth {
    pub fn num_arms(&self) -> usize {
        match &self.features {
            FeatureModel::Gaussian { arm_means, .. } => arm_means.len(),
            FeatureModel::LowerBound { .. } => 2,
            FeatureModel::Bootstrap { arm_rows, .. } => arm_rows.len(),
        }
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::arg("cholesky needs a square matrix"));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::arg("matrix is not positive definite"));
                }
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

pub fn ar1_covariance(d: usize, rho: f64) -> Array2<f64> {
    Array2::from_shape_fn((d, d), |(i, j)| rho.powi((i as i32 - j as i32).abs()))
}

/// Ground truth of the synthetic design.
///
/// `beta1` puts `l_bar/s` on coordinates `0..s`, `beta2` puts `-l_bar/s` on
/// `d/2..d/2+s`; arm means are `N(+-mu_gap, 0.5^2)` entrywise (arm 1 positive,
/// the rest alternate); the arm covariance is AR(1); `theta` has `theta_nnz`
/// leading entries drawn from `U[-1, 1]`.
pub fn synthetic_truth(config: &SyntheticConfig, rng: &mut StreamRng) -> Result<GroundTruth> {
    config.validate()?;
    let d = config.d;
    let nz = config.l_bar / config.s as f64;
    let mut beta1 = Array1::zeros(d);
    let mut beta2 = Array1::zeros(d);
    let half = d / 2;
    for j in 0..config.s {
        beta1[j] = nz;
        beta2[half + j] = -nz;
    }
    let arm_means = (0..config.k)
        .map(|k| {
            let centre = if k % 2 == 0 {
                config.mu_gap
            } else {
                -config.mu_gap
            };
            let dist = Normal::new(centre, 0.5).expect("valid normal");
            Array1::from_iter((0..d).map(|_| dist.sample(rng)))
        })
        .collect();
    let mut theta = Array1::zeros(config.d_z);
    for j in 0..config.theta_nnz {
        theta[j] = rng.random_range(-1.0..=1.0);
    }
    let chol = cholesky(&ar1_covariance(d, config.rho))?;
    Ok(GroundTruth {
        params: ModelParams::new(theta, beta1, beta2, config.sigma)?,
        features: FeatureModel::Gaussian {
            arm_means,
            arm_cov_chol: chol,
            ar1: Some(config.rho),
        },
    })
}

/// One simulated round: the context, the realized group, all counterfactual
/// rewards and the shared noise draw.
#[derive(Debug, Clone)]
pub struct Round {
    pub context: Context,
    pub group: Group,
    pub rewards: Array1<f64>,
    pub noise: f64,
}

/// Anything that can feed rounds to a policy.
pub trait Environment: Send {
    fn truth(&self) -> &ModelParams;
    fn num_arms(&self) -> usize;
    fn sample_round(&mut self) -> Round;
    /// Draws a gating vector from the context distribution using an external generator.
    fn sample_gating(&self, rng: &mut StreamRng) -> Array1<f64>;
    /// Running hash of everything drawn so far.
    fn checksum(&self) -> u64;
}

#[derive(Debug, Clone)]
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn write_f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        for v in vs {
            self.write_u64(v.to_bits());
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedEnv {
    truth: GroundTruth,
    gating: StreamRng,
    arms: StreamRng,
    group: StreamRng,
    noise: StreamRng,
    hash: Fnv,
}

impl SimulatedEnv {
    pub fn new(truth: GroundTruth, seed: u64) -> Self {
        Self {
            truth,
            gating: rng::stream(seed, streams::GATING),
            arms: rng::stream(seed, streams::ARMS),
            group: rng::stream(seed, streams::GROUP),
            noise: rng::stream(seed, streams::NOISE),
            hash: Fnv::new(),
        }
    }

    /// Synthetic truth drawn from `seed`'s truth stream, simulated with the same seed.
    pub fn synthetic(config: &SyntheticConfig, seed: u64) -> Result<Self> {
        let truth = synthetic_truth(config, &mut rng::stream(seed, streams::TRUTH))?;
        Ok(Self::new(truth, seed))
    }

    pub fn ground_truth(&self) -> &GroundTruth {
        &self.truth
    }

    fn draw_context(&mut self) -> Context {
        let d_z = self.truth.params.d_z();
        match &self.truth.features {
            FeatureModel::Gaussian {
                arm_means,
                arm_cov_chol,
                ar1,
            } => {
                let z = Array1::from_iter(
                    (0..d_z).map(|_| self.gating.sample::<f64, _>(StandardNormal)),
                );
                let d = arm_means[0].len();
                let mut arms = Array2::zeros((arm_means.len(), d));
                for (k, mean) in arm_means.iter().enumerate() {
                    let e: Vec<f64> = (0..d)
                        .map(|_| self.arms.sample::<f64, _>(StandardNormal))
                        .collect();
                    let mut row = arms.row_mut(k);
                    match ar1 {
                        Some(rho) => {
                            let innov = (1.0 - rho * rho).sqrt();
                            let mut prev = 0.0;
                            for j in 0..d {
                                let v = if j == 0 {
                                    e[0]
                                } else {
                                    rho * prev + innov * e[j]
                                };
                                row[j] = mean[j] + v;
                                prev = v;
                            }
                        }
                        None => {
                            for j in 0..d {
                                let mut v = 0.0;
                                for l in 0..=j {
                                    v += arm_cov_chol[[j, l]] * e[l];
                                }
                                row[j] = mean[j] + v;
                            }
                        }
                    }
                }
                Context::new(z, arms).expect("at least one arm")
            }
            FeatureModel::LowerBound { x_bar, d } => {
                let z = Array1::from_iter(
                    (0..d_z).map(|_| self.gating.sample::<f64, _>(StandardNormal)),
                );
                let half = x_bar / 2.0;
                let base: Vec<f64> = (0..*d)
                    .map(|_| self.arms.random_range(-half..=half))
                    .collect();
                let arms = Array2::from_shape_fn((2, *d), |(a, j)| {
                    // arm a (1-based a + 1) is shifted by (x_bar/2)(3 - 2(a + 1))
                    base[j] + half * (1.0 - 2.0 * a as f64)
                });
                Context::new(z, arms).expect("two arms")
            }
            FeatureModel::Bootstrap { z_rows, arm_rows } => {
                let i = self.gating.random_range(0..z_rows.nrows());
                let z = z_rows.row(i).to_owned();
                let d = arm_rows[0].ncols();
                let mut arms = Array2::zeros((arm_rows.len(), d));
                for (k, rows) in arm_rows.iter().enumerate() {
                    arms.row_mut(k).assign(&rows.row(i));
                }
                Context::new(z, arms).expect("at least one arm")
            }
        }
    }
}

impl Environment for SimulatedEnv {
    fn truth(&self) -> &ModelParams {
        &self.truth.params
    }

    fn num_arms(&self) -> usize {
        self.truth.num_arms()
    }

    fn sample_round(&mut self) -> Round {
        let context = self.draw_context();
        let params = &self.truth.params;
        let p1 = sigmoid(context.z().dot(params.theta()));
        let u: f64 = self.group.random();
        let group = if u < p1 { Group::One } else { Group::Two };
        let noise = params.sigma() * self.noise.sample::<f64, _>(StandardNormal);
        let beta = params.beta(group);
        let rewards = context.arms().dot(beta) + noise;

        self.hash.write_f64s(context.z().iter());
        self.hash.write_f64s(context.arms().iter());
        self.hash.write_u64(group.label() as u64);
        self.hash.write_u64(noise.to_bits());
        Round {
            context,
            group,
            rewards,
            noise,
        }
    }

    fn sample_gating(&self, rng: &mut StreamRng) -> Array1<f64> {
        let d_z = self.truth.params.d_z();
        match &self.truth.features {
            FeatureModel::Bootstrap { z_rows, .. } => {
                let i = rng.random_range(0..z_rows.nrows());
                z_rows.row(i).to_owned()
            }
            _ => Array1::from_iter((0..d_z).map(|_| rng.sample::<f64, _>(StandardNormal))),
        }
    }

    fn checksum(&self) -> u64 {
        self.hash.0
    }
}

/// The two-arm construction with `beta1 = (l_bar, 0, ...)`, `beta2 = -beta1`
/// and arm features `u + (x_bar/2)(3 - 2a)`, `u ~ U[-x_bar/2, x_bar/2]^d`.
pub fn lower_bound_env(
    l_bar: f64,
    x_bar: f64,
    theta_star: Array1<f64>,
    d: usize,
    sigma: f64,
    seed: u64,
) -> Result<SimulatedEnv> {
    if !(l_bar > 0.0 && x_bar > 0.0) {
        return Err(Error::arg("l_bar and x_bar must be positive"));
    }
    if d == 0 {
        return Err(Error::arg("d must be positive"));
    }
    let mut beta1 = Array1::zeros(d);
    beta1[0] = l_bar;
    let beta2 = -&beta1;
    let params = ModelParams::new(theta_star, beta1, beta2, sigma)?;
    Ok(SimulatedEnv::new(
        GroundTruth {
            params,
            features: FeatureModel::LowerBound { x_bar, d },
        },
        seed,
    ))
}

// ---------------------------------------------------------------------------
// Semi-synthetic ingestion
// ---------------------------------------------------------------------------

/// A header plus string cells, as read from a delimited text file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path, delimiter: u8) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Ingestion(format!("cannot open {}: {e}", path.display())))?;
        Self::from_reader(file, delimiter)
    }

    pub fn from_reader(reader: impl std::io::Read, delimiter: u8) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Ingestion(format!("unreadable header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Ingestion(format!("data row {}: {e}", i + 1)))?;
            rows.push(rec.iter().map(|c| c.trim().to_string()).collect());
        }
        Ok(Self { headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Ingestion(format!("missing column `{name}`")))
    }

    fn numeric(&self, row: usize, col: usize) -> Result<f64> {
        let cell = &self.rows[row][col];
        cell.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| {
                Error::Ingestion(format!(
                    "non-numeric cell `{cell}` in column `{}` at data row {}",
                    self.headers[col],
                    row + 1
                ))
            })
    }
}

/// Column roles and fitting controls for the semi-synthetic pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiSyntheticConfig {
    pub reward_column: String,
    pub group_column: String,
    /// Label treated as group 1; defaults to the lexicographically smaller label.
    #[serde(default)]
    pub group1_label: Option<String>,
    pub z_columns: Vec<String>,
    /// One list of feature columns per arm.
    pub arm_columns: Vec<Vec<String>>,
    /// Column holding the 0-based index of the logged arm; required when there
    /// is more than one arm.
    #[serde(default)]
    pub action_column: Option<String>,
    #[serde(default = "default_min_rows")]
    pub min_rows_per_group: usize,
    #[serde(default)]
    pub lambda_mode: LambdaMode,
    #[serde(default)]
    pub seed: u64,
}

fn default_min_rows() -> usize {
    100
}

/// Fits the ground truth of a semi-synthetic simulation from a labeled table:
/// a penalized logistic model of the group on `z`, one LASSO of the reward on
/// the logged arm's features per group, and the pooled residual noise level.
pub fn semi_synthetic_truth(table: &Table, config: &SemiSyntheticConfig) -> Result<GroundTruth> {
    let n = table.rows.len();
    if config.arm_columns.is_empty() || config.z_columns.is_empty() {
        return Err(Error::Ingestion(
            "need at least one z column and one arm".into(),
        ));
    }
    let d_x = config.arm_columns[0].len();
    if d_x == 0 || config.arm_columns.iter().any(|a| a.len() != d_x) {
        return Err(Error::Ingestion(
            "every arm needs the same positive number of feature columns".into(),
        ));
    }
    let reward_col = table.column(&config.reward_column)?;
    let group_col = table.column(&config.group_column)?;
    let z_cols: Vec<usize> = config
        .z_columns
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<_>>()?;
    let arm_cols: Vec<Vec<usize>> = config
        .arm_columns
        .iter()
        .map(|cols| {
            cols.iter()
                .map(|c| table.column(c))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let action_col = match &config.action_column {
        Some(c) => Some(table.column(c)?),
        None if arm_cols.len() > 1 => {
            return Err(Error::Ingestion(
                "an action column is required with more than one arm".into(),
            ))
        }
        None => None,
    };
    for (i, row) in table.rows.iter().enumerate() {
        if row.len() != table.headers.len() {
            return Err(Error::Ingestion(format!(
                "data row {} has {} cells, expected {}",
                i + 1,
                row.len(),
                table.headers.len()
            )));
        }
    }

    let mut labels: Vec<&str> = table.rows.iter().map(|r| r[group_col].as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() != 2 {
        return Err(Error::Ingestion(format!(
            "group column `{}` must hold exactly two distinct values, found {}",
            config.group_column,
            labels.len()
        )));
    }
    let group1 = match &config.group1_label {
        Some(l) if labels.contains(&l.as_str()) => l.clone(),
        Some(l) => {
            return Err(Error::Ingestion(format!(
                "group label `{l}` not present in column `{}`",
                config.group_column
            )))
        }
        None => labels[0].to_string(),
    };

    let mut z = Array2::zeros((n, z_cols.len()));
    let mut arm_rows: Vec<Array2<f64>> = (0..arm_cols.len())
        .map(|_| Array2::zeros((n, d_x)))
        .collect();
    let mut x = Array2::zeros((n, d_x));
    let mut y = Array1::zeros(n);
    let mut is_one = Vec::with_capacity(n);
    for i in 0..n {
        y[i] = table.numeric(i, reward_col)?;
        for (j, &c) in z_cols.iter().enumerate() {
            z[[i, j]] = table.numeric(i, c)?;
        }
        for (k, cols) in arm_cols.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                arm_rows[k][[i, j]] = table.numeric(i, c)?;
            }
        }
        let action = match action_col {
            Some(c) => {
                let a = table.numeric(i, c)?;
                if a < 0.0 || a.fract() != 0.0 || a as usize >= arm_cols.len() {
                    return Err(Error::Ingestion(format!(
                        "action `{a}` at data row {} is not an arm index",
                        i + 1
                    )));
                }
                a as usize
            }
            None => 0,
        };
        x.row_mut(i).assign(&arm_rows[action].row(i));
        is_one.push(table.rows[i][group_col] == group1);
    }
    for (label, want) in [(true, "group 1"), (false, "group 2")] {
        let count = is_one.iter().filter(|&&g| g == label).count();
        if count < config.min_rows_per_group {
            return Err(Error::Ingestion(format!(
                "{want} has {count} rows in column `{}`, need at least {}",
                config.group_column, config.min_rows_per_group
            )));
        }
    }
    let mean = y.mean().unwrap_or(0.0);
    if y.iter().all(|v| (v - mean).abs() == 0.0) {
        return Err(Error::Degenerate(format!(
            "reward column `{}` is constant; the noise level would be zero",
            config.reward_column
        )));
    }

    let rule = PenaltyRule {
        mode: config.lambda_mode,
        folds: DEFAULT_FOLDS,
        seed: config.seed,
        opts: SolverOptions::default(),
        scheduled: None,
    };
    let labels01: Array1<f64> = is_one.iter().map(|&g| if g { 1.0 } else { 0.0 }).collect();
    let (theta, _) = rule.fit_logistic(
        LogisticProblem::new(z.clone(), labels01, 0.0)?,
        &Array1::zeros(z_cols.len()),
    )?;

    let mut betas = Vec::with_capacity(2);
    let mut sse = 0.0;
    for want in [true, false] {
        let idx: Vec<usize> = (0..n).filter(|&i| is_one[i] == want).collect();
        let xg = x.select(Axis(0), &idx);
        let yg = y.select(Axis(0), &idx);
        let (beta, _) = rule.fit_lasso(
            xg.clone(),
            yg.clone(),
            Array1::ones(idx.len()),
            1.0,
            &Array1::zeros(d_x),
        )?;
        let resid = &yg - &xg.dot(&beta);
        sse += resid.dot(&resid);
        betas.push(beta);
    }
    let sigma = (sse / n as f64).sqrt();
    if !(sigma > 1e-12) {
        return Err(Error::Degenerate(format!(
            "fitted noise level {sigma} is not positive"
        )));
    }
    let beta2 = betas.pop().expect("two groups");
    let beta1 = betas.pop().expect("two groups");
    Ok(GroundTruth {
        params: ModelParams::new(theta, beta1, beta2, sigma)?,
        features: FeatureModel::Bootstrap {
            z_rows: z,
            arm_rows,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_config() -> SyntheticConfig {
        SyntheticConfig {
            d: 20,
            d_z: 6,
            s: 4,
            theta_nnz: 3,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn synthetic_truth_layout() {
        let cfg = SyntheticConfig {
            l_bar: 2.5,
            ..small_config()
        };
        let t = synthetic_truth(&cfg, &mut rng::stream(1, 1)).unwrap();
        let p = &t.params;
        let l1 = |v: &Array1<f64>| v.iter().map(|x| x.abs()).sum::<f64>();
        assert!((l1(p.beta1()) - 2.5).abs() < 1e-15);
        assert!((l1(p.beta2()) - 2.5).abs() < 1e-15);
        assert!(p.beta1().iter().take(4).all(|&v| v == 0.625));
        assert_eq!(p.beta2().iter().filter(|v| **v != 0.0).count(), 4);
        assert!(p.beta2().iter().skip(10).take(4).all(|&v| v == -0.625));
        assert_eq!(p.theta().iter().skip(3).filter(|v| **v != 0.0).count(), 0);
        assert!(p.theta().iter().all(|v| v.abs() <= 1.0));
        let s = ar1_covariance(7, 0.5);
        assert!((0..7).all(|i| s[[i, i]] == 1.0));
    }

    #[test]
    fn defaults_and_validation() {
        let d = SyntheticConfig::default();
        assert_eq!(
            (d.k, d.sigma, d.s, d.rho, d.d_z, d.theta_nnz),
            (2, 1.0, 20, 0.5, 50, 10)
        );
        let bad = SyntheticConfig {
            d: 10,
            s: 6,
            ..small_config()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cholesky_roundtrip() {
        let a = ar1_covariance(5, 0.7);
        let l = cholesky(&a).unwrap();
        let back = l.dot(&l.t());
        assert!((&back - &a).iter().all(|e| e.abs() < 1e-12));
        assert!(cholesky(&array![[1.0, 2.0], [2.0, 1.0]]).is_err());
    }

    #[test]
    fn fair_coin_when_theta_is_zero() {
        let mut t = synthetic_truth(&small_config(), &mut rng::stream(2, 1)).unwrap();
        t.params = ModelParams::new(
            Array1::zeros(6),
            t.params.beta1().clone(),
            t.params.beta2().clone(),
            1.0,
        )
        .unwrap();
        let mut env = SimulatedEnv::new(t, 5);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| env.sample_round().group == Group::One)
            .count();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn noiseless_identical_betas_give_mean_rewards() {
        let beta = array![0.5, -1.0, 2.0];
        let params = ModelParams::new(array![0.3], beta.clone(), beta.clone(), 1.0).unwrap();
        let mut truth = GroundTruth {
            params,
            features: FeatureModel::Gaussian {
                arm_means: vec![array![1.0, 0.0, 0.0], array![0.0, 0.0, 1.0]],
                arm_cov_chol: Array2::eye(3),
                ar1: None,
            },
        };
        // sigma = 0 is not a valid model; emulate it by zeroing the noise afterwards
        let mut env = SimulatedEnv::new(truth.clone(), 1);
        for _ in 0..20 {
            let r = env.sample_round();
            let mean = r.context.arms().dot(&beta);
            assert!((&(&r.rewards - r.noise) - &mean)
                .iter()
                .all(|e| e.abs() < 1e-12));
        }
        truth.params = truth.params.with_sigma(1e-300).unwrap();
        let mut env = SimulatedEnv::new(truth, 1);
        let r = env.sample_round();
        assert_eq!(r.rewards, r.context.arms().dot(&beta));
    }

    #[test]
    fn seeded_streams_are_bitwise_reproducible() {
        let cfg = small_config();
        let mut a = SimulatedEnv::synthetic(&cfg, 9).unwrap();
        let mut b = SimulatedEnv::synthetic(&cfg, 9).unwrap();
        for _ in 0..50 {
            let (ra, rb) = (a.sample_round(), b.sample_round());
            assert_eq!(ra.context, rb.context);
            assert_eq!(ra.rewards, rb.rewards);
        }
        assert_eq!(a.checksum(), b.checksum());
    }

    #[test]
    fn group_draws_do_not_depend_on_arm_count() {
        let two = SyntheticConfig {
            k: 2,
            ..small_config()
        };
        let five = SyntheticConfig {
            k: 5,
            ..small_config()
        };
        let mut a = SimulatedEnv::synthetic(&two, 3).unwrap();
        let mut b = SimulatedEnv::synthetic(&five, 3).unwrap();
        // theta is drawn after the arm means, so share it explicitly
        let theta = a.truth().theta().clone();
        b.truth.params = ModelParams::new(
            theta,
            b.truth().beta1().clone(),
            b.truth().beta2().clone(),
            1.0,
        )
        .unwrap();
        for _ in 0..200 {
            let (ra, rb) = (a.sample_round(), b.sample_round());
            assert_eq!(ra.group, rb.group);
            assert_eq!(ra.noise, rb.noise);
            assert_eq!(ra.context.z(), rb.context.z());
        }
    }

    #[test]
    fn ar1_lag_one_correlation() {
        let cfg = SyntheticConfig {
            d: 4,
            s: 1,
            d_z: 1,
            theta_nnz: 1,
            rho: 0.5,
            ..SyntheticConfig::default()
        };
        let mut env = SimulatedEnv::synthetic(&cfg, 4).unwrap();
        let mean = match &env.ground_truth().features {
            FeatureModel::Gaussian { arm_means, .. } => arm_means[0].clone(),
            _ => unreachable!(),
        };
        let n = 100_000;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let r = env.sample_round();
            let a = r.context.arm(0)[1] - mean[1];
            let b = r.context.arm(0)[2] - mean[2];
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!((corr - 0.5).abs() < 0.02, "{corr}");
    }

    #[test]
    fn lower_bound_optimal_value_identity() {
        let (l, xb) = (1.3, 0.8);
        let mut env = lower_bound_env(l, xb, array![0.4, -0.2], 3, 1.0, 7).unwrap();
        for _ in 0..500 {
            let r = env.sample_round();
            let p = env.truth();
            let g = r.group;
            let vals: Vec<f64> = (0..2).map(|a| r.context.arm(a).dot(p.beta(g))).collect();
            let best = vals[0].max(vals[1]);
            let x1 = r.context.arm(0)[0] - xb / 2.0;
            let gi = g.label() as f64;
            assert!((best - (l * x1 * (3.0 - 2.0 * gi) + l * xb / 2.0)).abs() < 1e-12);
            assert!(((vals[0] - vals[1]).abs() - l * xb).abs() < 1e-12);
        }
    }

    fn labeled_table(n: usize, seed: u64) -> (String, ModelParams) {
        let cfg = SyntheticConfig {
            d: 20,
            d_z: 3,
            s: 4,
            theta_nnz: 2,
            l_bar: 10.0,
            sigma: 0.5,
            k: 2,
            ..SyntheticConfig::default()
        };
        let mut env = SimulatedEnv::synthetic(&cfg, seed).unwrap();
        let truth = env.truth().clone();
        let mut pick = rng::stream(seed, 99);
        let mut out = String::from("reward,grp,action");
        for j in 0..3 {
            out += &format!(",z{j}");
        }
        for k in 0..2 {
            for j in 0..20 {
                out += &format!(",a{k}x{j}");
            }
        }
        out.push('\n');
        for _ in 0..n {
            let r = env.sample_round();
            let a: usize = pick.random_range(0..2);
            out += &format!(
                "{},{},{}",
                r.rewards[a],
                if r.group == Group::One { "hi" } else { "lo" },
                a
            );
            for v in r.context.z() {
                out += &format!(",{v}");
            }
            for v in r.context.arms() {
                out += &format!(",{v}");
            }
            out.push('\n');
        }
        (out, truth)
    }

    fn roles() -> SemiSyntheticConfig {
        SemiSyntheticConfig {
            reward_column: "reward".into(),
            group_column: "grp".into(),
            group1_label: Some("hi".into()),
            z_columns: (0..3).map(|j| format!("z{j}")).collect(),
            arm_columns: (0..2)
                .map(|k| (0..20).map(|j| format!("a{k}x{j}")).collect())
                .collect(),
            action_column: Some("action".into()),
            min_rows_per_group: 100,
            lambda_mode: LambdaMode::CrossValidation,
            seed: 0,
        }
    }

    #[test]
    fn semi_synthetic_rejects_bad_tables() {
        let (csv, _) = labeled_table(300, 1);
        let t = Table::from_reader(csv.as_bytes(), b',').unwrap();
        let mut cfg = roles();
        cfg.z_columns.push("nope".into());
        let err = semi_synthetic_truth(&t, &cfg).unwrap_err().to_string();
        assert!(err.contains("nope"), "{err}");

        let mut one_group = t.clone();
        for r in &mut one_group.rows {
            r[1] = "hi".into();
        }
        assert!(semi_synthetic_truth(&one_group, &roles()).is_err());

        let mut bad_cell = t.clone();
        bad_cell.rows[4][3] = "abc".into();
        let err = semi_synthetic_truth(&bad_cell, &roles())
            .unwrap_err()
            .to_string();
        assert!(err.contains("z0") && err.contains("row 5"), "{err}");

        let mut constant = t.clone();
        for r in &mut constant.rows {
            r[0] = "0".into();
        }
        assert!(matches!(
            semi_synthetic_truth(&constant, &roles()),
            Err(Error::Degenerate(_))
        ));

        let (small, _) = labeled_table(120, 2);
        let t = Table::from_reader(small.as_bytes(), b',').unwrap();
        assert!(semi_synthetic_truth(&t, &roles()).is_err());
    }
}
