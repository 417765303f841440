//! Empirical diagnostics for the regularity conditions behind the estimation
//! guarantees, and a probe of how the EM error scales with the sample size.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array1;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{em_fit, EmConfig};
use crate::env::{synthetic_truth, Environment, GroundTruth, SimulatedEnv, SyntheticConfig};
use crate::error::{Error, Result};
use crate::metrics::estimation_error;
use crate::model::{Interaction, ModelParams};
use crate::rng::{self, derive_seed, streams};

/// Pass/fail thresholds for [`check_assumptions`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Group probabilities must stay within `[xi, 1 - xi]`, i.e.
    /// `|z . theta| <= ln((1 - xi) / xi)`.
    pub xi: f64,
    /// Smallest acceptable `||beta1 - beta2|| / sigma`.
    pub snr_min: f64,
    /// Sample covariance eigenvalues must lie in `[eig_floor, eig_ceiling]`.
    pub eig_floor: f64,
    pub eig_ceiling: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            xi: 0.01,
            snr_min: 1.0,
            eig_floor: 1e-2,
            eig_ceiling: 1e2,
        }
    }
}

/// Empirical proxies for the gating, separation and eigenvalue conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Largest `|z . theta|` over the probe draws.
    pub gating_bound: f64,
    /// `ln((1 - xi) / xi)`.
    pub gating_limit: f64,
    /// `||beta1 - beta2||_2 / sigma`.
    pub snr: f64,
    /// Extreme eigenvalues over the covariance of `z` and of every arm's `x`.
    pub eig_min: f64,
    pub eig_max: f64,
    /// `(min, max)` eigenvalue of the covariance of `z`.
    pub z_spectrum: (f64, f64),
    /// `(min, max)` eigenvalue of the covariance of each arm's features.
    pub arm_spectra: Vec<(f64, f64)>,
    pub gating_ok: bool,
    pub snr_ok: bool,
    pub eigen_ok: bool,
    pub thresholds: Thresholds,
}

impl AssumptionReport {
    /// `quantity,value,threshold,satisfied` rows.
    pub fn to_csv(&self) -> String {
        let t = &self.thresholds;
        let mut out = String::from("quantity,value,threshold,satisfied\n");
        let mut row = |q: &str, v: f64, th: String, ok: Option<bool>| {
            out.push_str(&format!(
                "{q},{v},{th},{}\n",
                ok.map(|b| b.to_string()).unwrap_or_default()
            ));
        };
        row(
            "gating_bound",
            self.gating_bound,
            format!("<={}", self.gating_limit),
            Some(self.gating_ok),
        );
        row(
            "snr",
            self.snr,
            format!(">={}", t.snr_min),
            Some(self.snr_ok),
        );
        row(
            "eig_min",
            self.eig_min,
            format!(">={}", t.eig_floor),
            Some(self.eig_min >= t.eig_floor),
        );
        row(
            "eig_max",
            self.eig_max,
            format!("<={}", t.eig_ceiling),
            Some(self.eig_max <= t.eig_ceiling),
        );
        row("z_eig_min", self.z_spectrum.0, String::new(), None);
        row("z_eig_max", self.z_spectrum.1, String::new(), None);
        for (k, (lo, hi)) in self.arm_spectra.iter().enumerate() {
            row(&format!("arm{k}_eig_min"), *lo, String::new(), None);
            row(&format!("arm{k}_eig_max"), *hi, String::new(), None);
        }
        out
    }
}

/// Smallest number of probe rounds accepted by [`check_assumptions`].
pub const MIN_PROBE: usize = 100;

fn spectrum(samples: &[Array1<f64>]) -> (f64, f64) {
    let n = samples.len();
    let d = samples[0].len();
    let mut mean = Array1::<f64>::zeros(d);
    for s in samples {
        mean += s;
    }
    mean /= n as f64;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for s in samples {
        let c = nalgebra::DVector::from_iterator(d, s.iter().zip(mean.iter()).map(|(a, m)| a - m));
        cov.syger(1.0, &c, &c, 1.0);
    }
    cov /= (n - 1) as f64;
    cov.fill_upper_triangle_with_lower_triangle();
    let eig = SymmetricEigen::new(cov).eigenvalues;
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Draws `n_probe` rounds from `truth` and reports the empirical proxies.
pub fn check_assumptions(
    truth: &GroundTruth,
    n_probe: usize,
    thresholds: Thresholds,
    seed: u64,
) -> Result<AssumptionReport> {
    if n_probe < MIN_PROBE {
        return Err(Error::arg(format!(
            "n_probe must be at least {MIN_PROBE}, got {n_probe}"
        )));
    }
    if !(thresholds.xi > 0.0 && thresholds.xi < 0.5) {
        return Err(Error::arg("xi must lie in (0, 1/2)"));
    }
    let params = &truth.params;
    let mut env = SimulatedEnv::new(truth.clone(), derive_seed(seed, streams::PROBE));
    let k = truth.num_arms();
    let mut zs = Vec::with_capacity(n_probe);
    let mut xs: Vec<Vec<Array1<f64>>> = vec![Vec::with_capacity(n_probe); k];
    let mut gating_bound: f64 = 0.0;
    for _ in 0..n_probe {
        let round = env.sample_round();
        let ctx = &round.context;
        gating_bound = gating_bound.max(ctx.z().dot(params.theta()).abs());
        zs.push(ctx.z().clone());
        for (a, arm) in xs.iter_mut().enumerate() {
            arm.push(ctx.arm(a).to_owned());
        }
    }
    let diff = params.beta1() - params.beta2();
    let snr = diff.dot(&diff).sqrt() / params.sigma();
    let z_spectrum = spectrum(&zs);
    let arm_spectra: Vec<(f64, f64)> = xs.iter().map(|s| spectrum(s)).collect();
    let eig_min = arm_spectra.iter().map(|s| s.0).fold(z_spectrum.0, f64::min);
    let eig_max = arm_spectra.iter().map(|s| s.1).fold(z_spectrum.1, f64::max);
    let gating_limit = ((1.0 - thresholds.xi) / thresholds.xi).ln();
    Ok(AssumptionReport {
        gating_bound,
        gating_limit,
        snr,
        eig_min,
        eig_max,
        z_spectrum,
        arm_spectra,
        gating_ok: gating_bound <= gating_limit,
        snr_ok: snr >= thresholds.snr_min,
        eigen_ok: eig_min >= thresholds.eig_floor && eig_max <= thresholds.eig_ceiling,
        thresholds,
    })
}

/// Median error at one sample size of [`rate_probe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub median_l2: f64,
    /// Per-replication errors in replication order.
    pub errors: Vec<f64>,
}

/// Median of a nonempty slice; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Standard deviation of the initial perturbation around the truth.
pub const PROBE_INIT_SD: f64 = 0.05;

fn probe_error<F>(draw_truth: &F, n: usize, rep: usize, seed: u64, em: &EmConfig) -> Result<f64>
where
    F: Fn(u64) -> Result<GroundTruth>,
{
    let rep_seed = derive_seed(seed, rep as u64);
    // one truth per replication, shared by every sample size
    let truth = draw_truth(rep_seed)?;
    let cell_seed = derive_seed(rep_seed, n as u64);
    let mut env = SimulatedEnv::new(truth.clone(), cell_seed);
    let mut rng = rng::stream(cell_seed, streams::PROBE);
    let k = truth.num_arms();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        let round = env.sample_round();
        let a = rng.random_range(0..k);
        let reward = round.rewards[a];
        data.push(Interaction::new(
            round.context,
            a,
            reward,
            Some(round.group),
        )?);
    }
    let p = &truth.params;
    let noise = Normal::new(0.0, PROBE_INIT_SD).expect("positive sd");
    let mut jitter = |v: &Array1<f64>| v.mapv(|x| x + noise.sample(&mut rng));
    let init = ModelParams::new(
        jitter(p.theta()),
        jitter(p.beta1()),
        jitter(p.beta2()),
        p.sigma(),
    )?;
    let fit = em_fit(&data, &init, em)?;
    Ok(estimation_error(&fit.params, p)?.l2)
}

/// Median permutation-minimized l2 error of the EM estimator started near
/// the truth, for each sample size in `n_grid`. Every replication draws its
/// own truth; fresh uniformly explored samples are drawn per size.
pub fn rate_probe(
    config: &SyntheticConfig,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
    em: &EmConfig,
) -> Result<Vec<RatePoint>> {
    config.validate()?;
    let draw = |rep_seed: u64| synthetic_truth(config, &mut rng::stream(rep_seed, streams::TRUTH));
    rate_probe_with(draw, n_grid, reps, seed, em)
}

/// [`rate_probe`] with a custom truth per replication, drawn from the
/// replication's seed.
pub fn rate_probe_with<F>(
    draw_truth: F,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
    em: &EmConfig,
) -> Result<Vec<RatePoint>>
where
    F: Fn(u64) -> Result<GroundTruth> + Sync,
{
    em.validate()?;
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::arg(
            "n_grid must be nonempty and strictly increasing",
        ));
    }
    if reps == 0 {
        return Err(Error::arg("rate_probe needs at least one replication"));
    }
    let cells: Vec<(usize, usize)> = n_grid
        .iter()
        .flat_map(|&n| (0..reps).map(move |r| (n, r)))
        .collect();
    let errors: Vec<f64> = cells
        .par_iter()
        .map(|&(n, r)| probe_error(&draw_truth, n, r, seed, em))
        .collect::<Result<_>>()?;
    Ok(n_grid
        .iter()
        .zip(errors.chunks(reps))
        .map(|(&n, e)| RatePoint {
            n,
            median_l2: median(e),
            errors: e.to_vec(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::FeatureModel;
    use ndarray::Array2;

    fn gaussian_truth(theta: Array1<f64>, b1: Array1<f64>, b2: Array1<f64>) -> GroundTruth {
        let d = b1.len();
        GroundTruth {
            params: ModelParams::new(theta, b1, b2, 1.0).unwrap(),
            features: FeatureModel::Gaussian {
                arm_means: vec![Array1::zeros(d); 2],
                arm_cov_chol: Array2::eye(d),
                ar1: None,
            },
        }
    }

    #[test]
    fn zero_gating_gives_zero_bound() {
        let t = gaussian_truth(Array1::zeros(3), Array1::ones(4), -Array1::ones(4));
        let r = check_assumptions(&t, 200, Thresholds::default(), 1).unwrap();
        assert_eq!(r.gating_bound, 0.0);
        assert!(r.gating_ok);
        assert!(r.eig_min <= r.eig_max);
    }

    #[test]
    fn equal_coefficients_fail_separation() {
        let t = gaussian_truth(Array1::ones(3), Array1::ones(4), Array1::ones(4));
        let r = check_assumptions(
            &t,
            200,
            Thresholds {
                snr_min: 1e-9,
                ..Thresholds::default()
            },
            1,
        )
        .unwrap();
        assert_eq!(r.snr, 0.0);
        assert!(!r.snr_ok);
    }

    #[test]
    fn snr_matches_disjoint_support_norm() {
        let cfg = SyntheticConfig::default();
        let truth = synthetic_truth(&cfg, &mut rng::stream(3, streams::TRUTH)).unwrap();
        let r = check_assumptions(&truth, 100, Thresholds::default(), 3).unwrap();
        // s entries of l_bar/s in each of two disjoint blocks
        let expected = (2.0 * cfg.s as f64 * (cfg.l_bar / cfg.s as f64).powi(2)).sqrt() / cfg.sigma;
        assert!((r.snr - expected).abs() < 1e-12);
        assert!((r.snr - 0.790_569).abs() < 1e-6);
        assert!(check_assumptions(&truth, 99, Thresholds::default(), 3).is_err());
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[3.0]), 3.0);
        assert_eq!(median(&[4.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn single_replication_median_is_its_error() {
        let cfg = SyntheticConfig {
            d: 20,
            d_z: 4,
            s: 2,
            theta_nnz: 2,
            l_bar: 6.0,
            ..SyntheticConfig::default()
        };
        let out = rate_probe(&cfg, &[200], 1, 5, &EmConfig::default()).unwrap();
        assert_eq!(out[0].median_l2, out[0].errors[0]);
        assert!(out[0].median_l2.is_finite());
    }

    #[test]
    fn degenerate_truth_still_gives_finite_errors() {
        let mut b = Array1::zeros(20);
        b[0] = 1.0;
        b[1] = -0.5;
        let draw = |_seed: u64| Ok(gaussian_truth(Array1::zeros(4), b.clone(), b.clone()));
        let out = rate_probe_with(draw, &[100, 200], 2, 9, &EmConfig::default()).unwrap();
        assert!(out.iter().all(|p| p.errors.iter().all(|e| e.is_finite())));
        assert!(rate_probe_with(draw, &[200, 100], 2, 9, &EmConfig::default()).is_err());
    }
}
