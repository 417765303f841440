//! Linear contextual bandits whose customers fall into two latent groups.
//!
//! Rewards follow `y = <x_a, beta_g> + eps` where the group `g` is drawn from a
//! logistic gating model on customer features `z`. The crate provides
//!
//! - the model itself ([`model`]): responsibilities, the Bayes group classifier;
//! - sparse convex solvers for the M-steps ([`sparse`]);
//! - the sample-split regularized EM estimator ([`em`]) and its
//!   three-stage initializer ([`init`]);
//! - the phased greedy bandit policy plus baselines and oracles ([`policy`]);
//! - seeded simulators ([`env`]), regret and estimation metrics ([`metrics`]);
//! - a batch experiment runner with CSV/SVG output ([`experiment`]) and
//!   assumption diagnostics ([`theory`]).

pub mod em;
pub mod env;
pub mod error;
pub mod experiment;
pub mod init;
pub mod metrics;
pub mod model;
pub mod policy;
pub mod rng;
pub mod sparse;
pub mod theory;

pub use error::{Error, Result};
pub use model::{Context, Group, Interaction, ModelParams};
