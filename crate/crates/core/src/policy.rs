//! Phased greedy learning and its comparators.
//!
//! Rounds are grouped into episodes of doubling length `2^tau * n0`. Episode 0
//! explores uniformly; at the start of every later episode the learning
//! policies refit on the previous episode's interactions only and then act
//! greedily until the next boundary.

use std::ops::Range;

use ndarray::{Array1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::em::{design_matrices, em_fit, EmConfig, EmDiagnostic, PenaltyRule};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::init::{initialize, InitConfig};
use crate::metrics::{
    instant_regular_regret, instant_strong_regret, oracle_gap, RegretTrace, RoundRecord,
};
use crate::model::{classify_score, greedy_arm, Context, Group, Interaction, ModelParams};
use crate::rng::{self, derive_seed, streams, StreamRng};
use crate::sparse::LogisticProblem;

/// `2^tau * n0`, or an arithmetic error when that overflows.
pub fn episode_length(tau: usize, n0: usize) -> Result<usize> {
    let shift = u32::try_from(tau)
        .ok()
        .and_then(|t| 1usize.checked_shl(t))
        .filter(|_| tau < usize::BITS as usize)
        .ok_or_else(|| Error::Arithmetic(format!("2^{tau} overflows")))?;
    shift
        .checked_mul(n0)
        .ok_or_else(|| Error::Arithmetic(format!("2^{tau} * {n0} overflows")))
}

/// Index of the last episode that fits in the horizon: `floor(log2(T/n0 + 1)) - 1`,
/// evaluated exactly as the largest `k` with `(2^(k+1) - 1) * n0 <= T`.
pub fn max_episode(horizon: usize, n0: usize) -> Result<usize> {
    if n0 == 0 {
        return Err(Error::arg("n0 must be positive"));
    }
    if horizon < n0 {
        return Err(Error::arg(format!(
            "horizon {horizon} is shorter than n0 = {n0}"
        )));
    }
    // floor(log2(T/n0 + 1)) = floor(log2((T + n0) / n0)) = floor(log2(floor((T + n0) / n0)))
    let ratio = (horizon as u128 + n0 as u128) / n0 as u128;
    Ok((127 - ratio.leading_zeros()) as usize - 1)
}

/// Position in the episode schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSchedule {
    pub n0: usize,
    pub current_tau: usize,
}

impl EpisodeSchedule {
    pub fn new(n0: usize) -> Result<Self> {
        if n0 == 0 {
            return Err(Error::arg("n0 must be positive"));
        }
        Ok(Self { n0, current_tau: 0 })
    }

    pub fn current_length(&self) -> Result<usize> {
        episode_length(self.current_tau, self.n0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Initializer plus EM, classify-then-greedy.
    Hetero,
    /// One pooled LASSO, ignoring groups.
    SingleLasso,
    /// Per-group LASSOs on true labels, acting on the realized group.
    SeparateOracle,
    /// True parameters, Bayes-classified group.
    RegularOracle,
    /// True parameters and the realized group.
    StrongOracle,
    Uniform,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Hetero,
        PolicyKind::SingleLasso,
        PolicyKind::SeparateOracle,
        PolicyKind::RegularOracle,
        PolicyKind::StrongOracle,
        PolicyKind::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Hetero => "hetero",
            PolicyKind::SingleLasso => "single_lasso",
            PolicyKind::SeparateOracle => "separate_oracle",
            PolicyKind::RegularOracle => "regular_oracle",
            PolicyKind::StrongOracle => "strong_oracle",
            PolicyKind::Uniform => "uniform",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    fn is_oracle(self) -> bool {
        matches!(self, PolicyKind::RegularOracle | PolicyKind::StrongOracle)
    }

    fn learns(self) -> bool {
        matches!(
            self,
            PolicyKind::Hetero | PolicyKind::SingleLasso | PolicyKind::SeparateOracle
        )
    }
}

/// Estimation settings shared by the learning policies.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub em: EmConfig,
    pub init: InitConfig,
}

/// Parameters in force during one episode and where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSnapshot {
    pub episode: usize,
    /// `None` for policies without a model (uniform, and learners in episode 0).
    pub params: Option<ModelParams>,
    /// 0-based round indices of the interactions the fit used.
    pub fit_range: Option<Range<usize>>,
    pub diagnostics: Vec<EmDiagnostic>,
    /// The initializer fell back to the pooled fit.
    pub init_degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct PolicyState {
    kind: PolicyKind,
    params: Option<ModelParams>,
    truth: ModelParams,
    buffer: Vec<Interaction>,
    schedule: EpisodeSchedule,
    config: PolicyConfig,
    fitted_for: Option<usize>,
}

impl PolicyState {
    /// A fresh policy. Oracles carry `truth` as their model; learners use it
    /// only for the (known) noise level.
    pub fn new(
        kind: PolicyKind,
        n0: usize,
        truth: &ModelParams,
        config: PolicyConfig,
    ) -> Result<Self> {
        config.em.validate()?;
        config.init.validate()?;
        Ok(Self {
            kind,
            params: kind.is_oracle().then(|| truth.clone()),
            truth: truth.clone(),
            buffer: Vec::new(),
            schedule: EpisodeSchedule::new(n0)?,
            config,
            fitted_for: None,
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn params(&self) -> Option<&ModelParams> {
        self.params.as_ref()
    }

    pub fn schedule(&self) -> EpisodeSchedule {
        self.schedule
    }

    pub fn buffer(&self) -> &[Interaction] {
        &self.buffer
    }

    /// Group the policy acts on: its own classification, or the realized
    /// group for the policies entitled to see it.
    fn acting_group(&self, context: &Context, realized: Group) -> Group {
        match self.kind {
            PolicyKind::StrongOracle | PolicyKind::SeparateOracle => realized,
            _ => match &self.params {
                Some(p) => classify_score(context.z().dot(p.theta())),
                None => Group::One,
            },
        }
    }

    fn explores(&self) -> bool {
        self.kind == PolicyKind::Uniform || (self.kind.learns() && self.schedule.current_tau == 0)
    }

    /// Chooses an arm. `realized` is the environment's group draw, used only
    /// by the policies defined to know it.
    pub fn select_action(
        &self,
        context: &Context,
        realized: Group,
        rng: &mut StreamRng,
    ) -> Result<usize> {
        if context.d_x() != self.truth.d_x() || context.d_z() != self.truth.d_z() {
            return Err(Error::arg("context dimensions do not match the policy"));
        }
        if self.explores() {
            return Ok(rng.random_range(0..context.num_arms()));
        }
        if self.kind.learns() && self.fitted_for != Some(self.schedule.current_tau) {
            return Err(Error::State(format!(
                "{} has not been refit for episode {}",
                self.kind.name(),
                self.schedule.current_tau
            )));
        }
        let params = self
            .params
            .as_ref()
            .ok_or_else(|| Error::State("policy has no model".into()))?;
        let group = self.acting_group(context, realized);
        Ok(greedy_arm(context, params.beta(group).view()))
    }

    /// Records an interaction of the current episode.
    pub fn observe(&mut self, interaction: Interaction) {
        self.buffer.push(interaction);
    }

    /// Closes the current episode: refits on its interactions (for learners),
    /// clears the buffer and advances the schedule.
    pub fn advance(&mut self, seed: u64) -> Result<EpisodeSnapshot> {
        let next = self.schedule.current_tau + 1;
        let mut snapshot = EpisodeSnapshot {
            episode: next,
            params: None,
            fit_range: None,
            diagnostics: Vec::new(),
            init_degenerate: false,
        };
        if self.kind.learns() {
            if self.buffer.is_empty() {
                return Err(Error::State("no interactions to refit on".into()));
            }
            let episode_seed = derive_seed(seed, next as u64);
            match self.kind {
                PolicyKind::Hetero => self.refit_hetero(next, episode_seed, &mut snapshot)?,
                PolicyKind::SingleLasso => self.refit_single(episode_seed)?,
                PolicyKind::SeparateOracle => self.refit_separate(episode_seed)?,
                _ => unreachable!("only learners refit"),
            }
            self.fitted_for = Some(next);
        }
        snapshot.params = self.params.clone();
        self.buffer.clear();
        self.schedule.current_tau = next;
        Ok(snapshot)
    }

    fn em_config(&self, seed: u64) -> EmConfig {
        EmConfig {
            cv_seed: seed,
            ..self.config.em.clone()
        }
    }

    fn rule(&self, seed: u64) -> PenaltyRule {
        PenaltyRule {
            mode: self.config.em.lambda_mode,
            folds: self.config.em.cv_folds,
            seed,
            opts: self.config.em.solver_options(),
            scheduled: None,
        }
    }

    fn refit_hetero(
        &mut self,
        episode: usize,
        seed: u64,
        snapshot: &mut EpisodeSnapshot,
    ) -> Result<()> {
        let start = match (&self.params, episode) {
            (Some(prev), e) if e >= 2 => prev.clone(),
            _ => {
                let init_config = InitConfig {
                    sigma: self.truth.sigma(),
                    ..self.config.init.clone()
                };
                match initialize(&self.buffer, &init_config, derive_seed(seed, 0)) {
                    Ok(res) => {
                        snapshot.init_degenerate = res.degenerate;
                        res.params
                    }
                    Err(_) => {
                        // same fallback the initializer uses for a degenerate clustering
                        snapshot.init_degenerate = true;
                        let pooled = self.pooled_fit(derive_seed(seed, 0))?;
                        ModelParams::new(
                            Array1::zeros(self.truth.d_z()),
                            pooled.clone(),
                            pooled,
                            init_config.sigma,
                        )?
                    }
                }
            }
        };
        let fit = em_fit(&self.buffer, &start, &self.em_config(derive_seed(seed, 1)))?;
        snapshot.diagnostics = fit.diagnostics;
        self.params = Some(fit.params);
        Ok(())
    }

    fn pooled_fit(&self, seed: u64) -> Result<Array1<f64>> {
        let (x, _, y) = design_matrices(&self.buffer);
        let n = y.len();
        let warm = self
            .params
            .as_ref()
            .map(|p| p.beta1().clone())
            .unwrap_or_else(|| Array1::zeros(self.truth.d_x()));
        let (beta, _) =
            self.rule(seed)
                .fit_lasso(x, y, Array1::ones(n), self.truth.sigma(), &warm)?;
        Ok(beta)
    }

    fn refit_single(&mut self, seed: u64) -> Result<()> {
        let beta = self.pooled_fit(seed)?;
        self.params = Some(ModelParams::new(
            Array1::zeros(self.truth.d_z()),
            beta.clone(),
            beta,
            self.truth.sigma(),
        )?);
        Ok(())
    }

    fn refit_separate(&mut self, seed: u64) -> Result<()> {
        let (x, z, y) = design_matrices(&self.buffer);
        let labels: Vec<Group> = self
            .buffer
            .iter()
            .map(|it| {
                it.group
                    .ok_or_else(|| Error::State("separate fit needs logged groups".into()))
            })
            .collect::<Result<_>>()?;
        let rule = self.rule(seed);
        let mut betas = Vec::with_capacity(2);
        for g in [Group::One, Group::Two] {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == g).collect();
            let warm = self
                .params
                .as_ref()
                .map(|p| p.beta(g).clone())
                .unwrap_or_else(|| Array1::zeros(self.truth.d_x()));
            // a group that was never observed keeps its previous coefficients
            let beta = if idx.len() < 2 {
                warm
            } else {
                rule.fit_lasso(
                    x.select(Axis(0), &idx),
                    y.select(Axis(0), &idx),
                    Array1::ones(idx.len()),
                    self.truth.sigma(),
                    &warm,
                )?
                .0
            };
            betas.push(beta);
        }
        let indicator: Array1<f64> = labels
            .iter()
            .map(|&g| if g == Group::One { 1.0 } else { 0.0 })
            .collect();
        let warm_theta = self
            .params
            .as_ref()
            .map(|p| p.theta().clone())
            .unwrap_or_else(|| Array1::zeros(self.truth.d_z()));
        let theta = rule
            .fit_logistic(LogisticProblem::new(z, indicator, 0.0)?, &warm_theta)
            .map(|(t, _)| t)
            .unwrap_or(warm_theta);
        let beta2 = betas.pop().expect("two groups");
        let beta1 = betas.pop().expect("two groups");
        self.params = Some(ModelParams::new(theta, beta1, beta2, self.truth.sigma())?);
        Ok(())
    }
}

/// Output of one policy run.
#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub trace: RegretTrace,
    /// One entry per episode, starting with episode 0.
    pub snapshots: Vec<EpisodeSnapshot>,
    /// Environment checksum after the last round.
    pub env_checksum: u64,
}

/// Plays `horizon` rounds against `env`. Action randomness comes from the
/// policy stream of `seed`, fits derive their seeds from it as well.
pub fn run_policy(
    env: &mut dyn Environment,
    mut state: PolicyState,
    horizon: usize,
    seed: u64,
) -> Result<PolicyRun> {
    let n0 = state.schedule.n0;
    max_episode(horizon, n0)?;
    let truth = env.truth().clone();
    if truth.d_x() != state.truth.d_x() || truth.d_z() != state.truth.d_z() {
        return Err(Error::arg("environment and policy dimensions differ"));
    }
    let mut rng = rng::stream(seed, streams::POLICY);
    let mut trace = RegretTrace::with_capacity(horizon);
    let mut snapshots = vec![EpisodeSnapshot {
        episode: 0,
        params: state.params.clone(),
        fit_range: None,
        diagnostics: Vec::new(),
        init_degenerate: false,
    }];
    let mut round = 0usize;
    let mut episode_start = 0usize;
    loop {
        let len = state.schedule.current_length()?;
        let end = round + len.min(horizon - round);
        while round < end {
            let r = env.sample_round();
            let arm = state.select_action(&r.context, r.group, &mut rng)?;
            let classified = state.acting_group(&r.context, r.group);
            trace.push(RoundRecord {
                round: round + 1,
                episode: state.schedule.current_tau,
                strong: instant_strong_regret(&r.context, r.group, arm, &truth),
                regular: instant_regular_regret(&r.context, r.group, arm, &truth),
                gap: oracle_gap(&r.context, r.group, &truth),
                arm,
                group: r.group,
                classified,
            });
            let reward = r.rewards[arm];
            state.observe(Interaction::new(r.context, arm, reward, Some(r.group))?);
            round += 1;
        }
        if round >= horizon {
            break;
        }
        let mut snapshot = state.advance(seed)?;
        if state.kind.learns() {
            snapshot.fit_range = Some(episode_start..round);
        }
        snapshots.push(snapshot);
        episode_start = round;
    }
    Ok(PolicyRun {
        trace,
        snapshots,
        env_checksum: env.checksum(),
    })
}
