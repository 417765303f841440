//! Batch experiments: config parsing, paired replications across policies,
//! long-format result tables, summaries and SVG charts.
//!
//! Every replication `r` uses the seed `base_seed ^ r` for its environment,
//! and all policies of a replication see the same environment draws, so
//! policy comparisons are paired.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{EmConfig, LambdaMode};
use crate::env::{
    lower_bound_env, semi_synthetic_truth, Environment, GroundTruth, SemiSyntheticConfig,
    SimulatedEnv, SyntheticConfig, Table,
};
use crate::error::{Error, Result};
use crate::init::InitConfig;
use crate::metrics::{estimation_error, excess_misclassification};
use crate::policy::{max_episode, run_policy, PolicyConfig, PolicyKind, PolicyRun, PolicyState};
use crate::rng::derive_seed;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// The lower-bound construction: two arms, `beta1 = (l_bar, 0, ...) = -beta2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LowerBoundConfig {
    pub l_bar: f64,
    pub x_bar: f64,
    /// Gating coefficients; their length sets the gating dimension.
    pub theta: Vec<f64>,
    pub d: usize,
    pub sigma: f64,
}

impl Default for LowerBoundConfig {
    fn default() -> Self {
        Self {
            l_bar: 1.0,
            x_bar: 1.0,
            theta: vec![0.0],
            d: 2,
            sigma: 1.0,
        }
    }
}

/// A labeled table from which the ground truth is fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiSyntheticSource {
    /// Relative paths resolve against the config file's directory.
    pub path: PathBuf,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub columns: SemiSyntheticConfig,
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentConfig {
    Synthetic(SyntheticConfig),
    LowerBound(LowerBoundConfig),
    SemiSynthetic(SemiSyntheticSource),
}

/// One policy of the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Label used in the outputs; defaults to the kind's name.
    #[serde(default)]
    pub name: Option<String>,
    /// Full estimation settings. When absent they are built from the
    /// experiment-level `lambda_mode` and `t_max`.
    #[serde(default)]
    pub settings: Option<PolicyConfig>,
}

impl PolicySpec {
    pub fn label(&self) -> &str {
        self.name.as_deref().unwrap_or(self.kind.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    pub policies: Vec<PolicySpec>,
    pub horizon: usize,
    pub n0: usize,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub lambda_mode: LambdaMode,
    /// EM iterations per episode.
    #[serde(default = "one")]
    pub t_max: usize,
    /// Worker threads for the replication cells.
    #[serde(default = "one")]
    pub jobs: usize,
    /// Monte Carlo draws for the excess misclassification metric.
    #[serde(default = "default_misclass_samples")]
    pub misclass_samples: usize,
}

fn one() -> usize {
    1
}

fn default_misclass_samples() -> usize {
    10_000
}

fn config_error(key: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        line,
        message: message.into(),
    }
}

/// Line (1-based) of the first occurrence of `"key"` in `text`, or 0.
fn line_of(text: &str, key: &str) -> usize {
    let quoted = format!("\"{key}\"");
    text.lines()
        .position(|l| l.contains(&quoted))
        .map_or(0, |i| i + 1)
}

/// Key named in a serde message such as "unknown field `x`".
fn key_in_message(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

impl ExperimentConfig {
    /// Parses and validates a JSON config.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.to_string();
            let line = inner.line();
            // unknown or missing keys are named in the message, not the path
            let key = match (key_in_message(&message), path.as_str()) {
                (Some(k), ".") => k.to_string(),
                (Some(k), p) if message.contains("missing field") => format!("{p}.{k}"),
                (_, p) => p.to_string(),
            };
            config_error(&key, line, message)
        })?;
        config.validate(text)?;
        Ok(config)
    }

    fn validate(&self, text: &str) -> Result<()> {
        let err = |key: &str, msg: String| config_error(key, line_of(text, key), msg);
        if self.n0 == 0 {
            return Err(err("n0", "n0 must be positive".into()));
        }
        if self.horizon < self.n0 {
            return Err(err(
                "horizon",
                format!("horizon {} is shorter than n0 = {}", self.horizon, self.n0),
            ));
        }
        if self.replications == 0 {
            return Err(err("replications", "need at least one replication".into()));
        }
        if self.jobs == 0 {
            return Err(err("jobs", "jobs must be positive".into()));
        }
        if self.t_max == 0 {
            return Err(err("t_max", "t_max must be positive".into()));
        }
        if self.misclass_samples == 0 {
            return Err(err(
                "misclass_samples",
                "misclass_samples must be positive".into(),
            ));
        }
        if self.policies.is_empty() {
            return Err(err("policies", "the policy list is empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.policies {
            if !seen.insert(p.label()) {
                return Err(err(
                    "policies",
                    format!("duplicate policy name `{}`", p.label()),
                ));
            }
            if let Some(s) = &p.settings {
                s.em.validate()
                    .map_err(|e| err("settings", e.to_string()))?;
                s.init
                    .validate()
                    .map_err(|e| err("settings", e.to_string()))?;
            }
        }
        match &self.environment {
            EnvironmentConfig::Synthetic(c) => {
                c.validate().map_err(|e| err("environment", e.to_string()))
            }
            EnvironmentConfig::LowerBound(c) => {
                if c.theta.is_empty() {
                    return Err(err("theta", "theta needs at least one entry".into()));
                }
                if !(c.l_bar > 0.0 && c.x_bar > 0.0 && c.sigma > 0.0) || c.d == 0 {
                    return Err(err(
                        "environment",
                        "lower-bound l_bar, x_bar, sigma and d must be positive".into(),
                    ));
                }
                Ok(())
            }
            EnvironmentConfig::SemiSynthetic(_) => Ok(()),
        }
    }

    /// Settings of one policy, falling back to the experiment-level knobs.
    pub fn policy_config(&self, spec: &PolicySpec) -> PolicyConfig {
        spec.settings.clone().unwrap_or_else(|| PolicyConfig {
            em: EmConfig {
                t_max: self.t_max,
                lambda_mode: self.lambda_mode,
                ..EmConfig::default()
            },
            init: InitConfig {
                screen_lambda_mode: self.lambda_mode,
                ..InitConfig::default()
            },
        })
    }

    /// Seed of replication `rep`.
    pub fn replication_seed(&self, rep: usize) -> u64 {
        self.base_seed ^ rep as u64
    }
}

/// Reads and validates a config file. Relative semi-synthetic data paths are
/// resolved against the file's directory.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error("", 0, format!("cannot read {}: {e}", path.display())))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let EnvironmentConfig::SemiSynthetic(src) = &mut config.environment {
        if src.path.is_relative() {
            if let Some(dir) = path.parent() {
                src.path = dir.join(&src.path);
            }
        }
    }
    Ok(config)
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

/// Builds environments for replications; a semi-synthetic truth is fitted once.
pub struct EnvironmentFactory {
    config: EnvironmentConfig,
    fitted: Option<GroundTruth>,
}

impl EnvironmentFactory {
    pub fn new(config: &EnvironmentConfig) -> Result<Self> {
        let fitted = match config {
            EnvironmentConfig::SemiSynthetic(src) => {
                let delimiter = u8::try_from(src.delimiter).map_err(|_| {
                    Error::Ingestion("the delimiter must be an ASCII character".into())
                })?;
                let table = Table::read(&src.path, delimiter)?;
                Some(semi_synthetic_truth(&table, &src.columns)?)
            }
            _ => None,
        };
        Ok(Self {
            config: config.clone(),
            fitted,
        })
    }

    pub fn build(&self, seed: u64) -> Result<SimulatedEnv> {
        match &self.config {
            EnvironmentConfig::Synthetic(c) => SimulatedEnv::synthetic(c, seed),
            EnvironmentConfig::LowerBound(c) => lower_bound_env(
                c.l_bar,
                c.x_bar,
                ndarray::Array1::from(c.theta.clone()),
                c.d,
                c.sigma,
                seed,
            ),
            EnvironmentConfig::SemiSynthetic(_) => {
                let truth = self.fitted.clone().expect("fitted at construction");
                Ok(SimulatedEnv::new(truth, seed))
            }
        }
    }
}

/// Estimation metrics at the end of an episode, for the estimate fitted on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryMetrics {
    /// 1-based round after which the estimate became available.
    pub round: usize,
    /// Episode that starts using the estimate.
    pub episode: usize,
    pub err_l2: f64,
    pub err_l1: f64,
    pub excess_misclass: f64,
}

/// Result of one (policy, replication) cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub policy: String,
    pub kind: PolicyKind,
    pub rep: usize,
    pub seed: u64,
    pub run: PolicyRun,
    pub boundaries: Vec<BoundaryMetrics>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub horizon: usize,
    pub n0: usize,
    pub replications: usize,
    /// Policy labels in config order.
    pub policies: Vec<String>,
    /// Cells in (policy, replication) order.
    pub cells: Vec<CellResult>,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub jobs: usize,
    /// Print one line per finished cell to standard error.
    pub progress: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            progress: false,
        }
    }
}

fn run_cell(
    config: &ExperimentConfig,
    factory: &EnvironmentFactory,
    spec: &PolicySpec,
    rep: usize,
) -> Result<CellResult> {
    let seed = config.replication_seed(rep);
    let mut env = factory.build(seed)?;
    let truth = env.truth().clone();
    let state = PolicyState::new(spec.kind, config.n0, &truth, config.policy_config(spec))?;
    let run = run_policy(&mut env, state, config.horizon, seed)?;
    let mut boundaries = Vec::new();
    for snap in &run.snapshots {
        let (Some(params), Some(range)) = (&snap.params, &snap.fit_range) else {
            continue;
        };
        let err = estimation_error(params, &truth)?;
        let excess = excess_misclassification(
            params.theta(),
            truth.theta(),
            |rng| env.sample_gating(rng),
            config.misclass_samples,
            derive_seed(seed, snap.episode as u64),
        )?;
        boundaries.push(BoundaryMetrics {
            round: range.end,
            episode: snap.episode,
            err_l2: err.l2,
            err_l1: err.l1,
            excess_misclass: excess,
        });
    }
    Ok(CellResult {
        policy: spec.label().to_string(),
        kind: spec.kind,
        rep,
        seed,
        run,
        boundaries,
    })
}

/// Runs every (policy, replication) cell, `jobs` at a time, and returns
/// them in (policy, replication) order. The first failing cell in that order
/// aborts the experiment.
pub fn run_experiment(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentResults> {
    max_episode(config.horizon, config.n0)?;
    let factory = EnvironmentFactory::new(&config.environment)?;
    let cells: Vec<(usize, usize)> = (0..config.policies.len())
        .flat_map(|p| (0..config.replications).map(move |r| (p, r)))
        .collect();
    let total = cells.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let work = |&(p, rep): &(usize, usize)| {
        let spec = &config.policies[p];
        let started = std::time::Instant::now();
        let out = run_cell(config, &factory, spec, rep).map_err(|e| Error::Replication {
            policy: spec.label().to_string(),
            replication: rep,
            seed: config.replication_seed(rep),
            source: Box::new(e),
        });
        if options.progress {
            let k = done.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
            eprintln!(
                "[{k}/{total}] {} rep {rep} {} in {:.1}s",
                spec.label(),
                if out.is_ok() { "done" } else { "FAILED" },
                started.elapsed().as_secs_f64()
            );
        }
        out
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.max(1))
        .build()
        .map_err(|e| Error::arg(format!("cannot start {} workers: {e}", options.jobs)))?;
    let outcomes: Vec<Result<CellResult>> = pool.install(|| cells.par_iter().map(work).collect());
    let cells = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResults {
        horizon: config.horizon,
        n0: config.n0,
        replications: config.replications,
        policies: config
            .policies
            .iter()
            .map(|p| p.label().to_string())
            .collect(),
        cells,
    })
}

impl ExperimentResults {
    pub fn cell(&self, policy: &str, rep: usize) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.policy == policy && c.rep == rep)
    }

    /// Whether all policies of each replication consumed identical
    /// environment draws.
    pub fn paired(&self) -> bool {
        (0..self.replications).all(|rep| {
            let mut sums = self
                .cells
                .iter()
                .filter(|c| c.rep == rep)
                .map(|c| c.run.env_checksum);
            let first = sums.next();
            sums.all(|s| Some(s) == first)
        })
    }

    /// The long table: one row per (policy, replication, round).
    pub fn table(&self) -> Vec<ResultRow> {
        let mut rows = Vec::with_capacity(self.cells.len() * self.horizon);
        for cell in &self.cells {
            let strong_cum = cell.run.trace.strong_cumulative();
            let regular_cum = cell.run.trace.regular_cumulative();
            let mut boundary = cell.boundaries.iter().peekable();
            for (i, rec) in cell.run.trace.records().iter().enumerate() {
                let at = boundary.next_if(|b| b.round == rec.round);
                rows.push(ResultRow {
                    policy: cell.policy.clone(),
                    rep: cell.rep,
                    round: rec.round,
                    episode: rec.episode,
                    strong_instant: rec.strong,
                    strong_cum: strong_cum[i],
                    regular_instant: rec.regular,
                    regular_cum: regular_cum[i],
                    err_l2: at.map(|b| b.err_l2),
                    err_l1: at.map(|b| b.err_l1),
                    excess_misclass: at.map(|b| b.excess_misclass),
                });
            }
        }
        rows
    }
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

pub const RESULTS_HEADER: [&str; 11] = [
    "policy",
    "rep",
    "round",
    "episode",
    "strong_instant",
    "strong_cum",
    "regular_instant",
    "regular_cum",
    "err_l2",
    "err_l1",
    "excess_misclass",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub policy: String,
    pub rep: usize,
    pub round: usize,
    pub episode: usize,
    pub strong_instant: f64,
    pub strong_cum: f64,
    pub regular_instant: f64,
    pub regular_cum: f64,
    pub err_l2: Option<f64>,
    pub err_l1: Option<f64>,
    pub excess_misclass: Option<f64>,
}

/// Mean and standard error across replications at one (policy, round).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub round: usize,
    pub strong_avg_mean: f64,
    pub strong_avg_se: f64,
    pub regular_avg_mean: f64,
    pub regular_avg_se: f64,
    pub err_l2_mean: Option<f64>,
    pub err_l2_se: Option<f64>,
}

/// Sample mean and standard error (zero for a single value).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregates the long table into per-(policy, round) means of the running
/// average regrets. Policies keep their first-appearance order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order: Vec<&str> = Vec::new();
    // (policy, round) -> (strong averages, regular averages, errors), each in row order
    type Acc = (Vec<f64>, Vec<f64>, Vec<f64>);
    let mut groups: BTreeMap<(usize, usize), Acc> = BTreeMap::new();
    for row in rows {
        let p = match order.iter().position(|&q| q == row.policy) {
            Some(p) => p,
            None => {
                order.push(&row.policy);
                order.len() - 1
            }
        };
        let t = row.round as f64;
        let acc = groups.entry((p, row.round)).or_default();
        acc.0.push(row.strong_cum / t);
        acc.1.push(row.regular_cum / t);
        if let Some(e) = row.err_l2 {
            acc.2.push(e);
        }
    }
    groups
        .into_iter()
        .map(|((p, round), (s, r, e))| {
            let (strong_avg_mean, strong_avg_se) = mean_se(&s);
            let (regular_avg_mean, regular_avg_se) = mean_se(&r);
            let err = (!e.is_empty()).then(|| mean_se(&e));
            SummaryRow {
                policy: order[p].to_string(),
                round,
                strong_avg_mean,
                strong_avg_se,
                regular_avg_mean,
                regular_avg_se,
                err_l2_mean: err.map(|x| x.0),
                err_l2_se: err.map(|x| x.1),
            }
        })
        .collect()
}

/// Per (policy, replication, episode) aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub policy: String,
    pub rep: usize,
    pub episode: usize,
    pub first_round: usize,
    pub last_round: usize,
    pub strong_instant_mean: f64,
    pub regular_instant_mean: f64,
    pub strong_avg_at_end: f64,
    pub regular_avg_at_end: f64,
    /// Error of the estimate fitted on this episode.
    pub err_l2: Option<f64>,
    pub err_l1: Option<f64>,
    pub excess_misclass: Option<f64>,
}

pub fn episode_table(rows: &[ResultRow]) -> Vec<EpisodeRow> {
    let mut out: Vec<EpisodeRow> = Vec::new();
    let mut sums = (0.0, 0.0, 0usize);
    for (i, row) in rows.iter().enumerate() {
        sums.0 += row.strong_instant;
        sums.1 += row.regular_instant;
        sums.2 += 1;
        let closes = rows.get(i + 1).is_none_or(|next| {
            next.policy != row.policy || next.rep != row.rep || next.episode != row.episode
        });
        if closes {
            let t = row.round as f64;
            let k = sums.2 as f64;
            out.push(EpisodeRow {
                policy: row.policy.clone(),
                rep: row.rep,
                episode: row.episode,
                first_round: row.round + 1 - sums.2,
                last_round: row.round,
                strong_instant_mean: sums.0 / k,
                regular_instant_mean: sums.1 / k,
                strong_avg_at_end: row.strong_cum / t,
                regular_avg_at_end: row.regular_cum / t,
                err_l2: row.err_l2,
                err_l1: row.err_l1,
                excess_misclass: row.excess_misclass,
            });
            sums = (0.0, 0.0, 0);
        }
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.rep.to_string(),
            r.round.to_string(),
            r.episode.to_string(),
            r.strong_instant.to_string(),
            r.strong_cum.to_string(),
            r.regular_instant.to_string(),
            r.regular_cum.to_string(),
            fmt_opt(r.err_l2),
            fmt_opt(r.err_l1),
            fmt_opt(r.excess_misclass),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a `results.csv` written by [`write_results_csv`].
pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(Error::Ingestion(format!(
            "unexpected results header {header:?}"
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "policy",
        "round",
        "strong_avg_mean",
        "strong_avg_se",
        "regular_avg_mean",
        "regular_avg_se",
        "err_l2_mean",
        "err_l2_se",
    ])?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.round.to_string(),
            r.strong_avg_mean.to_string(),
            r.strong_avg_se.to_string(),
            r.regular_avg_mean.to_string(),
            r.regular_avg_se.to_string(),
            fmt_opt(r.err_l2_mean),
            fmt_opt(r.err_l2_se),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_episodes_csv(rows: &[EpisodeRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "policy",
        "rep",
        "episode",
        "first_round",
        "last_round",
        "strong_instant_mean",
        "regular_instant_mean",
        "strong_avg_at_end",
        "regular_avg_at_end",
        "err_l2",
        "err_l1",
        "excess_misclass",
    ])?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.rep.to_string(),
            r.episode.to_string(),
            r.first_round.to_string(),
            r.last_round.to_string(),
            r.strong_instant_mean.to_string(),
            r.regular_instant_mean.to_string(),
            r.strong_avg_at_end.to_string(),
            r.regular_avg_at_end.to_string(),
            fmt_opt(r.err_l2),
            fmt_opt(r.err_l1),
            fmt_opt(r.excess_misclass),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Charts
// ---------------------------------------------------------------------------

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Most points drawn per series; longer series are thinned evenly.
const MAX_POINTS: usize = 400;

struct Series<'a> {
    name: &'a str,
    points: Vec<(f64, f64)>,
    markers: bool,
}

fn thin(points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points;
    }
    let step = points.len().div_ceil(MAX_POINTS);
    let last = points.len() - 1;
    points
        .into_iter()
        .enumerate()
        .filter(|(i, _)| i % step == 0 || *i == last)
        .map(|(_, p)| p)
        .collect()
}

/// Draws one panel at `(x0, y0)` of size `w x h` into `out`.
fn panel(
    out: &mut String,
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    title: &str,
    x_label: &str,
    series: &[Series<'_>],
) {
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in all {
        if x.is_finite() && y.is_finite() {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() {
        (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
    }
    ymin = ymin.min(0.0);
    if xmax <= xmin {
        xmax = xmin + 1.0;
    }
    if ymax <= ymin {
        ymax = ymin + 1.0;
    }
    let (left, right, top, bottom) = (60.0, 20.0, 30.0, 45.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| x0 + left + (x - xmin) / (xmax - xmin) * pw;
    let sy = |y: f64| y0 + top + (1.0 - (y - ymin) / (ymax - ymin)) * ph;
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">{}</text>"#,
        x0 + left + pw / 2.0,
        y0 + 18.0,
        title
    );
    let _ = writeln!(
        out,
        r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
        x0 + left,
        y0 + top,
        pw,
        ph
    );
    for k in 0..=4 {
        let fx = xmin + (xmax - xmin) * k as f64 / 4.0;
        let fy = ymin + (ymax - ymin) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
            sx(fx),
            y0 + top + ph + 14.0,
            tick(fx)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
            x0 + left - 4.0,
            sy(fy) + 3.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
        x0 + left + pw / 2.0,
        y0 + h - 8.0,
        x_label
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        if s.markers {
            for p in &pts {
                let (cx, cy) = p.split_once(',').expect("formatted pair");
                let _ = writeln!(
                    out,
                    r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#
                );
            }
        }
        let ly = y0 + top + 12.0 + 14.0 * i as f64;
        let lx = x0 + left + pw - 120.0;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#,
            lx,
            ly,
            lx + 16.0,
            ly,
            lx + 20.0,
            ly + 3.0,
            escape(s.name)
        );
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn svg_document(width: f64, height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// Two panels: mean average strong and regular regret against the round.
pub fn regret_svg(summary: &[SummaryRow]) -> String {
    let names = policy_order(summary.iter().map(|r| r.policy.as_str()));
    let series = |regular: bool| -> Vec<Series<'_>> {
        names
            .iter()
            .map(|&name| Series {
                name,
                points: thin(
                    summary
                        .iter()
                        .filter(|r| r.policy == name)
                        .map(|r| {
                            (
                                r.round as f64,
                                if regular {
                                    r.regular_avg_mean
                                } else {
                                    r.strong_avg_mean
                                },
                            )
                        })
                        .collect(),
                ),
                markers: false,
            })
            .collect()
    };
    let mut body = String::new();
    panel(
        &mut body,
        0.0,
        0.0,
        520.0,
        360.0,
        "average strong regret",
        "round",
        &series(false),
    );
    panel(
        &mut body,
        520.0,
        0.0,
        520.0,
        360.0,
        "average regular regret",
        "round",
        &series(true),
    );
    svg_document(1040.0, 360.0, &body)
}

/// Mean l2 estimation error at episode boundaries against the round.
pub fn error_svg(summary: &[SummaryRow]) -> String {
    let names = policy_order(summary.iter().map(|r| r.policy.as_str()));
    let series: Vec<Series<'_>> = names
        .iter()
        .map(|&name| Series {
            name,
            points: summary
                .iter()
                .filter(|r| r.policy == name)
                .filter_map(|r| r.err_l2_mean.map(|e| (r.round as f64, e)))
                .collect(),
            markers: true,
        })
        .filter(|s| !s.points.is_empty())
        .collect();
    let mut body = String::new();
    panel(
        &mut body,
        0.0,
        0.0,
        560.0,
        380.0,
        "l2 estimation error (label-swap minimized)",
        "round",
        &series,
    );
    svg_document(560.0, 380.0, &body)
}

fn policy_order<'a>(names: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for n in names {
        if !out.contains(&n) {
            out.push(n);
        }
    }
    out
}

/// Writes results.csv, summary.csv, episodes.csv, regret.svg and error.svg
/// into `dir`, creating it if needed.
pub fn emit_outputs(results: &ExperimentResults, dir: &Path) -> Result<()> {
    if results.cells.is_empty() {
        return Err(Error::arg("no results to write"));
    }
    std::fs::create_dir_all(dir)?;
    let rows = results.table();
    write_results_csv(&rows, &dir.join("results.csv"))?;
    let summary = summarize(&rows);
    write_summary_csv(&summary, &dir.join("summary.csv"))?;
    write_episodes_csv(&episode_table(&rows), &dir.join("episodes.csv"))?;
    std::fs::write(dir.join("regret.svg"), regret_svg(&summary))?;
    std::fs::write(dir.join("error.svg"), error_svg(&summary))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
  "environment": { "kind": "synthetic" },
  "policies": [ { "kind": "uniform" } ],
  "horizon": 400,
  "n0": 200
}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let EnvironmentConfig::Synthetic(env) = &c.environment else {
            panic!("expected a synthetic environment");
        };
        assert_eq!((env.k, env.sigma, env.rho), (2, 1.0, 0.5));
        assert_eq!((c.replications, c.t_max, c.jobs, c.base_seed), (1, 1, 1, 0));
        assert_eq!(c.lambda_mode, LambdaMode::CrossValidation);
    }

    #[test]
    fn horizon_below_n0_is_rejected_with_its_line() {
        let text = MINIMAL.replace("\"horizon\": 400", "\"horizon\": 100");
        match ExperimentConfig::from_json(&text) {
            Err(Error::Config { key, line, .. }) => {
                assert_eq!(key, "horizon");
                assert_eq!(line, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_policy_names_are_rejected() {
        let text = MINIMAL.replace(
            r#"[ { "kind": "uniform" } ]"#,
            r#"[ { "kind": "uniform" }, { "kind": "hetero", "name": "uniform" } ]"#,
        );
        assert!(matches!(
            ExperimentConfig::from_json(&text),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn unknown_and_missing_keys_are_named() {
        let text = MINIMAL.replace("\"n0\": 200", "\"n0\": 200,\n  \"horizn\": 3");
        match ExperimentConfig::from_json(&text) {
            Err(Error::Config { key, line, .. }) => {
                assert_eq!(key, "horizn");
                assert_eq!(line, 6);
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = MINIMAL.replace(",\n  \"n0\": 200", "");
        match ExperimentConfig::from_json(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "n0"),
            other => panic!("unexpected {other:?}"),
        }
        let text = MINIMAL.replace("\"horizon\": 400", "\"horizon\": \"long\"");
        match ExperimentConfig::from_json(&text) {
            Err(Error::Config { key, line, .. }) => {
                assert_eq!(key, "horizon");
                assert_eq!(line, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn standard_error_of_one_value_is_zero() {
        assert_eq!(mean_se(&[3.5]), (3.5, 0.0));
        let (m, se) = mean_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn episode_table_splits_on_episode_changes() {
        let row = |round: usize, episode: usize, s: f64| ResultRow {
            policy: "p".into(),
            rep: 0,
            round,
            episode,
            strong_instant: s,
            strong_cum: 0.0,
            regular_instant: 0.0,
            regular_cum: 0.0,
            err_l2: None,
            err_l1: None,
            excess_misclass: None,
        };
        let rows = vec![row(1, 0, 1.0), row(2, 0, 3.0), row(3, 1, 5.0)];
        let eps = episode_table(&rows);
        assert_eq!(eps.len(), 2);
        assert_eq!(
            (
                eps[0].first_round,
                eps[0].last_round,
                eps[0].strong_instant_mean
            ),
            (1, 2, 2.0)
        );
        assert_eq!((eps[1].first_round, eps[1].last_round), (3, 3));
    }
}
