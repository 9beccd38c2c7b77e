//! Inference of selection coefficients (and optionally initial haplotype
//! frequencies) from temporal allele-frequency data.
//!
//! The model is accessed only through forward Wright-Fisher simulation
//! ([`wf`]). Simulated and observed trajectories are compared with the
//! signature kernel score ([`sigkernel`]), whose unbiased estimate drives a
//! pseudo-marginal Metropolis-Hastings sampler over transformed parameters
//! ([`params`], [`mcmc`]). [`baselines`] holds the logit-regression estimator,
//! RMSE benchmarking and posterior summaries.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod mcmc;
pub mod params;
pub mod rng;
pub mod sigkernel;
pub mod wf;

pub use error::{Error, Result};
