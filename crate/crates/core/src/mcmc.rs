//! Pseudo-marginal Metropolis-Hastings on the scoring-rule posterior
//!
//! ```text
//! pi(theta | x_obs) ∝ p(theta) * exp(-w * S_hat(theta))
//! ```
//!
//! where `S_hat` is an unbiased, simulation-based estimate of the signature
//! kernel score. The chain moves on the unconstrained scale; the estimate at
//! the current state is cached and never refreshed.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Block, ParameterSpace};
use crate::rng::{derive_seed, stream};
use crate::sigkernel::{sig_score_unbiased, KernelConfig};
use crate::wf::{
    FitnessModel, HaplotypeFrequencies, RecombinationMap, SelectionMode, SimConfig, Trajectory,
    WrightFisher,
};

/// Stochastic score estimate used as the negative log pseudo-likelihood.
pub trait ScoreTarget: Sync {
    /// Score estimate at constrained `theta`; `+inf` marks a rejected point.
    /// All randomness must derive from `seed`.
    fn neg_score(&self, theta: &[f64], seed: u64) -> f64;
}

/// Everything about the simulator that is not inferred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub sim: SimConfig,
    pub dominance: Vec<f64>,
    #[serde(default)]
    pub mode: SelectionMode,
    pub rmap: RecombinationMap,
    /// When set, `theta` carries the initial haplotype frequencies (and the
    /// auxiliary simplex coordinate) after the selection coefficients.
    #[serde(default)]
    pub infer_init_haps: bool,
}

impl ModelSpec {
    pub fn loci(&self) -> usize {
        self.dominance.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.rmap.validate()?;
        let loci = self.loci();
        if loci == 0 {
            return Err(Error::InvalidFitness("need at least one locus".into()));
        }
        if self.rmap.loci() != loci {
            return Err(Error::DimensionMismatch {
                expected: loci - 1,
                got: self.rmap.rates.len(),
            });
        }
        if self.sim.init_haps.loci() != loci {
            return Err(Error::DimensionMismatch {
                expected: 1 << loci,
                got: self.sim.init_haps.len(),
            });
        }
        Ok(())
    }

    /// The parameter space this spec expects: selection coefficients on
    /// `(low, high)` with a uniform prior, then optionally a Dirichlet simplex.
    pub fn default_space(&self, low: f64, high: f64, dirichlet_alpha: f64) -> ParameterSpace {
        let mut blocks = vec![Block::uniform("s", low, high, self.loci())];
        if self.infer_init_haps {
            blocks.push(Block::dirichlet("h", 1 << self.loci(), dirichlet_alpha));
        }
        ParameterSpace::new(blocks).expect("valid default space")
    }

    /// Checks that `space` decodes into this spec's parameters.
    pub fn check_space(&self, space: &ParameterSpace) -> Result<()> {
        let loci = self.loci();
        let want = loci + if self.infer_init_haps { (1 << loci) + 1 } else { 0 };
        if space.constrained_dim() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                got: space.constrained_dim(),
            });
        }
        if self.infer_init_haps {
            match space.blocks().last() {
                Some(Block::Simplex { dim, .. }) if *dim == 1 << loci => {}
                _ => {
                    return Err(Error::InvalidSpace(
                        "initial haplotype inference needs a trailing simplex block".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    /// Fitness model and simulation config at `theta`.
    pub fn decode(&self, theta: &[f64]) -> Result<(FitnessModel, SimConfig)> {
        let loci = self.loci();
        if theta.len() < loci {
            return Err(Error::DimensionMismatch {
                expected: loci,
                got: theta.len(),
            });
        }
        let model = FitnessModel::new(theta[..loci].to_vec(), self.dominance.clone(), self.mode)?;
        let mut sim = self.sim.clone();
        if self.infer_init_haps {
            let n = 1 << loci;
            let h = theta.get(loci..loci + n).ok_or(Error::DimensionMismatch {
                expected: loci + n,
                got: theta.len(),
            })?;
            sim.init_haps = HaplotypeFrequencies::from_weights(h)?;
        }
        Ok((model, sim))
    }

    pub fn simulate_batch(
        &self,
        theta: &[f64],
        count: usize,
        seed: u64,
        stream_tag: u64,
    ) -> Result<Vec<Trajectory>> {
        let (model, sim) = self.decode(theta)?;
        let wf = WrightFisher::new(model, &self.rmap)?;
        (0..count)
            .into_par_iter()
            .map(|j| wf.simulate(&sim, &mut stream(seed, &[stream_tag, j as u64])))
            .collect()
    }
}

/// Signature-kernel score of simulations at `theta` against observed replicates.
#[derive(Debug, Clone)]
pub struct SigScoreTarget {
    obs: Vec<Trajectory>,
    model: ModelSpec,
    m: usize,
    kernel: KernelConfig,
}

impl SigScoreTarget {
    pub fn new(obs: Vec<Trajectory>, model: ModelSpec, m: usize, kernel: KernelConfig) -> Result<Self> {
        model.validate()?;
        kernel.validate()?;
        if m < 2 {
            return Err(Error::TooFew { needed: 2, got: m });
        }
        if obs.is_empty() {
            return Err(Error::TooFew { needed: 1, got: 0 });
        }
        let times = model.sim.times();
        for (r, o) in obs.iter().enumerate() {
            if o.times() != times.as_slice() {
                return Err(Error::InvalidTrajectory(format!(
                    "replicate {} time grid {:?} differs from simulation grid {:?}",
                    r + 1,
                    o.times(),
                    times
                )));
            }
            if o.loci() != model.loci() {
                return Err(Error::DimensionMismatch {
                    expected: model.loci(),
                    got: o.loci(),
                });
            }
        }
        Ok(Self {
            obs,
            model,
            m,
            kernel,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn replicates(&self) -> usize {
        self.obs.len()
    }

    /// Score summed over replicates, each against a fresh batch of `m` simulations.
    pub fn try_neg_score(&self, theta: &[f64], seed: u64) -> Result<f64> {
        let mut total = 0.0;
        for (r, obs) in self.obs.iter().enumerate() {
            let sims = self.model.simulate_batch(theta, self.m, seed, r as u64)?;
            total += sig_score_unbiased(&sims, obs, &self.kernel)?;
        }
        Ok(total)
    }
}

impl ScoreTarget for SigScoreTarget {
    fn neg_score(&self, theta: &[f64], seed: u64) -> f64 {
        self.try_neg_score(theta, seed).unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Learning rate weighting the score against the prior.
    pub w: f64,
    /// Simulations per score estimate.
    pub m: usize,
    /// Proposal covariance scale: increments are `N(0, c * I)` on the
    /// unconstrained scale.
    pub c: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            w: 1.0,
            m: 8,
            c: 1e-4,
            n_steps: 1000,
            burn_in: 200,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(Error::InvalidMcmc(format!("learning rate {}", self.w)));
        }
        if self.m < 2 {
            return Err(Error::InvalidMcmc(format!("m = {} < 2", self.m)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidMcmc(format!("proposal scale {}", self.c)));
        }
        if self.burn_in >= self.n_steps {
            return Err(Error::InvalidMcmc(format!(
                "burn-in {} must be below n_steps {}",
                self.burn_in, self.n_steps
            )));
        }
        Ok(())
    }

    pub fn proposal_sd(&self) -> f64 {
        self.c.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub z: Vec<f64>,
    pub theta: Vec<f64>,
    pub score_hat: f64,
    pub log_prior: f64,
    pub log_jac: f64,
}

impl ChainState {
    /// Evaluates the prior and Jacobian at `z`; the score is estimated only
    /// when the prior is positive.
    pub fn at<T: ScoreTarget + ?Sized>(
        z: Vec<f64>,
        space: &ParameterSpace,
        target: &T,
        seed: u64,
    ) -> Result<Self> {
        let (theta, log_jac) = space.constrain(&z)?;
        let log_prior = space.log_prior(&theta)?;
        let score_hat = if log_prior > f64::NEG_INFINITY {
            target.neg_score(&theta, seed)
        } else {
            f64::INFINITY
        };
        Ok(Self {
            z,
            theta,
            score_hat,
            log_prior,
            log_jac,
        })
    }

    pub fn log_target(&self, w: f64) -> f64 {
        if self.log_prior == f64::NEG_INFINITY || self.score_hat == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        self.log_prior + self.log_jac - w * self.score_hat
    }
}

/// One pseudo-marginal MH transition. Returns the next state and whether
/// the proposal was accepted.
pub fn mh_step<T, R>(
    state: &ChainState,
    space: &ParameterSpace,
    target: &T,
    cfg: &McmcConfig,
    rng: &mut R,
) -> Result<(ChainState, bool)>
where
    T: ScoreTarget + ?Sized,
    R: Rng + ?Sized,
{
    let sd = cfg.proposal_sd();
    let z: Vec<f64> = state
        .z
        .iter()
        .map(|zi| zi + sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let u: f64 = rng.random();
    let score_seed = rng.next_u64();
    let proposal = match space.constrain(&z) {
        Ok((theta, log_jac)) => {
            let log_prior = space.log_prior(&theta)?;
            let score_hat = if log_prior > f64::NEG_INFINITY {
                target.neg_score(&theta, score_seed)
            } else {
                f64::INFINITY
            };
            ChainState {
                z,
                theta,
                score_hat,
                log_prior,
                log_jac,
            }
        }
        // overflowed proposal
        Err(Error::NonFinite(_)) => return Ok((state.clone(), false)),
        Err(e) => return Err(e),
    };
    let log_new = proposal.log_target(cfg.w);
    if log_new == f64::NEG_INFINITY {
        return Ok((state.clone(), false));
    }
    let log_ratio = log_new - state.log_target(cfg.w);
    if u.ln() < log_ratio {
        Ok((proposal, true))
    } else {
        Ok((state.clone(), false))
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub names: Vec<String>,
    /// Kept draws on the constrained scale, one row per step after burn-in.
    pub samples: Array2<f64>,
    pub acceptance_rate: f64,
}

/// Runs a single chain from `init_theta`.
pub fn run_chain<T: ScoreTarget + ?Sized>(
    init_theta: &[f64],
    space: &ParameterSpace,
    target: &T,
    cfg: &McmcConfig,
) -> Result<ChainOutput> {
    cfg.validate()?;
    let z0 = space.unconstrain(init_theta)?;
    let mut rng = stream(cfg.seed, &[0]);
    let mut state = ChainState::at(z0, space, target, derive_seed(cfg.seed, &[1]))?;
    if state.log_prior == f64::NEG_INFINITY {
        return Err(Error::OutOfSupport("initial point has zero prior density".into()));
    }
    let kept = cfg.n_steps - cfg.burn_in;
    let dim = space.constrained_dim();
    let mut samples = Array2::zeros((kept, dim));
    let mut accepted = 0usize;
    for step in 0..cfg.n_steps {
        let (next, acc) = mh_step(&state, space, target, cfg, &mut rng)?;
        accepted += usize::from(acc);
        state = next;
        if step >= cfg.burn_in {
            for (c, v) in state.theta.iter().enumerate() {
                samples[[step - cfg.burn_in, c]] = *v;
            }
        }
    }
    Ok(ChainOutput {
        names: space.names(),
        samples,
        acceptance_rate: accepted as f64 / cfg.n_steps as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::PriorSpec;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Constant(f64);

    impl ScoreTarget for Constant {
        fn neg_score(&self, _: &[f64], _: u64) -> f64 {
            self.0
        }
    }

    struct Counting(AtomicUsize);

    impl ScoreTarget for Counting {
        fn neg_score(&self, _: &[f64], seed: u64) -> f64 {
            self.0.fetch_add(1, Ordering::SeqCst);
            // noisy so that some proposals are rejected
            (seed % 1000) as f64 / 100.0
        }
    }

    fn real_line(count: usize) -> ParameterSpace {
        ParameterSpace::new(vec![Block::Interval {
            label: "x".into(),
            low: f64::NEG_INFINITY,
            high: f64::INFINITY,
            count,
            prior: PriorSpec::Flat,
        }])
        .unwrap()
    }

    fn cfg(n_steps: usize, burn_in: usize) -> McmcConfig {
        McmcConfig {
            n_steps,
            burn_in,
            c: 0.25,
            ..McmcConfig::default()
        }
    }

    #[test]
    fn bookkeeping_rows() {
        let space = real_line(2);
        let out = run_chain(&[0.0, 0.0], &space, &Constant(0.0), &cfg(10, 2)).unwrap();
        assert_eq!(out.samples.dim(), (8, 2));
        assert_eq!(out.names, vec!["x_1", "x_2"]);
    }

    #[test]
    fn symmetric_ratio_always_accepts() {
        let space = real_line(3);
        let target = Constant(1.7);
        let out = run_chain(&[0.1, 0.2, 0.3], &space, &target, &cfg(200, 0)).unwrap();
        assert_eq!(out.acceptance_rate, 1.0);
    }

    #[test]
    fn zero_learning_rate_ignores_score() {
        let space = real_line(1);
        let target = Counting(AtomicUsize::new(0));
        let c = McmcConfig {
            w: 0.0,
            ..cfg(300, 0)
        };
        let out = run_chain(&[0.0], &space, &target, &c).unwrap();
        assert_eq!(out.acceptance_rate, 1.0);
    }

    #[test]
    fn out_of_support_rejected() {
        let space = ParameterSpace::new(vec![Block::uniform("s", -1.0, 1.0, 1)]).unwrap();
        let state = ChainState::at(vec![0.0], &space, &Constant(0.0), 0).unwrap();
        // a proposal far in the tail underflows to the boundary, where the prior vanishes
        let big = McmcConfig {
            c: 1e6,
            ..McmcConfig::default()
        };
        let mut rng = stream(5, &[0]);
        let mut rejected_at_boundary = 0;
        for _ in 0..200 {
            let (next, acc) = mh_step(&state, &space, &Constant(0.0), &big, &mut rng).unwrap();
            if !acc {
                assert_eq!(next, state);
                rejected_at_boundary += 1;
            } else {
                assert!(space.contains(&next.theta));
            }
        }
        assert!(rejected_at_boundary > 150);

        let infinite = ChainState {
            score_hat: f64::INFINITY,
            ..state.clone()
        };
        assert_eq!(infinite.log_target(1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn infinite_score_rejected() {
        let space = real_line(1);
        let state = ChainState::at(vec![0.0], &space, &Constant(0.0), 0).unwrap();
        let mut rng = stream(1, &[0]);
        for _ in 0..50 {
            let (next, acc) =
                mh_step(&state, &space, &Constant(f64::INFINITY), &cfg(2, 0), &mut rng).unwrap();
            assert!(!acc);
            assert_eq!(next, state);
        }
    }

    #[test]
    fn current_score_never_reestimated() {
        let space = real_line(2);
        let target = Counting(AtomicUsize::new(0));
        let out = run_chain(&[0.0, 0.0], &space, &target, &cfg(500, 100)).unwrap();
        assert!(out.acceptance_rate > 0.0 && out.acceptance_rate < 1.0);
        // one initial evaluation plus one per proposal
        assert_eq!(target.0.load(Ordering::SeqCst), 501);
    }

    #[test]
    fn reproducible_given_seed() {
        let space = real_line(2);
        let a = run_chain(&[0.0, 0.0], &space, &Counting(AtomicUsize::new(0)), &cfg(100, 10)).unwrap();
        let b = run_chain(&[0.0, 0.0], &space, &Counting(AtomicUsize::new(0)), &cfg(100, 10)).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn init_out_of_support() {
        let space = ParameterSpace::new(vec![Block::uniform("s", -1.0, 1.0, 1)]).unwrap();
        assert!(run_chain(&[1.5], &space, &Constant(0.0), &cfg(10, 0)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(McmcConfig::default().validate().is_ok());
        assert!(cfg(10, 10).validate().is_err());
        assert!(McmcConfig { m: 1, ..McmcConfig::default() }.validate().is_err());
        assert!(McmcConfig { c: 0.0, ..McmcConfig::default() }.validate().is_err());
        assert_eq!(McmcConfig { c: 1e-4, ..McmcConfig::default() }.proposal_sd(), 1e-2);
    }

    fn tiny_spec() -> ModelSpec {
        ModelSpec {
            sim: SimConfig {
                pop_size: 500,
                t0: 0,
                intervals: 4,
                delta_t: 5,
                init_haps: HaplotypeFrequencies::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
                seed: 0,
            },
            dominance: vec![0.5, 0.5],
            mode: SelectionMode::Standard,
            rmap: RecombinationMap::new(vec![0.01]).unwrap(),
            infer_init_haps: false,
        }
    }

    #[test]
    fn sig_target_guards_and_determinism() {
        let spec = tiny_spec();
        let obs = spec.simulate_batch(&[0.05, 0.0], 1, 3, 0).unwrap().remove(0);
        let target = SigScoreTarget::new(vec![obs], spec, 4, KernelConfig::default()).unwrap();
        let a = target.neg_score(&[0.02, 0.03], 11);
        assert!(a.is_finite());
        assert_eq!(a, target.neg_score(&[0.02, 0.03], 11));
        assert_ne!(a, target.neg_score(&[0.02, 0.03], 12));
        // genotype fitness 1 + s = 0
        assert_eq!(target.neg_score(&[-1.0, 0.0], 11), f64::INFINITY);
    }

    #[test]
    fn sig_target_two_sims_matches_longhand() {
        let spec = tiny_spec();
        let obs = spec.simulate_batch(&[0.05, 0.0], 1, 3, 0).unwrap().remove(0);
        let kernel = KernelConfig::default();
        let target = SigScoreTarget::new(vec![obs.clone()], spec.clone(), 2, kernel).unwrap();
        let theta = [0.02, 0.03];
        let sims = spec.simulate_batch(&theta, 2, 77, 0).unwrap();
        let k = |a: &Trajectory, b: &Trajectory| {
            crate::sigkernel::goursat_solve(
                &crate::sigkernel::preprocess(a, true).unwrap(),
                &crate::sigkernel::preprocess(b, true).unwrap(),
                &kernel.static_kernel,
                &kernel.pde,
            )
            .unwrap()
        };
        let longhand = k(&sims[0], &sims[1]) - (k(&sims[0], &obs) + k(&sims[1], &obs));
        approx::assert_relative_eq!(target.neg_score(&theta, 77), longhand, max_relative = 1e-12);
    }

    #[test]
    fn sig_target_rejects_mismatched_grid() {
        let spec = tiny_spec();
        let mut other = spec.clone();
        other.sim.delta_t = 3;
        let obs = other.simulate_batch(&[0.0, 0.0], 1, 0, 0).unwrap().remove(0);
        assert!(SigScoreTarget::new(vec![obs], spec, 4, KernelConfig::default()).is_err());
    }
}
