//! Point estimators, error metrics and posterior summaries used for benchmarking.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{run_chain, McmcConfig, ModelSpec, SigScoreTarget};
use crate::rng::{derive_seed, stream};
use crate::sigkernel::KernelConfig;
use crate::wf::{FitnessModel, RecombinationMap, SelectionMode, SimConfig, Trajectory, WrightFisher};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Ploidy {
    Haploid,
    #[default]
    Diploid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlsEstimate {
    pub s_hat: Vec<f64>,
    pub ploidy: Ploidy,
    /// Loci whose trajectory sat on a boundary (all 0 or all 1); their estimate is 0.
    pub degenerate: Vec<bool>,
}

/// Per-locus least-squares slope of logit allele frequency on generation.
///
/// Frequencies are clamped to `[eps, 1 - eps]` with `eps = 1/(2N)` when the
/// population size is known and `1e-6` otherwise. The diploid estimate is
/// twice the slope.
pub fn lls_estimate(traj: &Trajectory, ploidy: Ploidy, pop_size: Option<u64>) -> Result<LlsEstimate> {
    if traj.len() < 2 {
        return Err(Error::TooFew {
            needed: 2,
            got: traj.len(),
        });
    }
    let eps = pop_size.map_or(1e-6, |n| 1.0 / (2.0 * n.max(1) as f64));
    let t: Vec<f64> = traj.times().iter().map(|&v| v as f64).collect();
    let n = t.len() as f64;
    let t_mean = t.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|v| (v - t_mean).powi(2)).sum();
    let factor = match ploidy {
        Ploidy::Haploid => 1.0,
        Ploidy::Diploid => 2.0,
    };

    let mut s_hat = Vec::with_capacity(traj.loci());
    let mut degenerate = Vec::with_capacity(traj.loci());
    for col in traj.freqs().columns() {
        if col.iter().all(|&a| a == 0.0) || col.iter().all(|&a| a == 1.0) {
            s_hat.push(0.0);
            degenerate.push(true);
            continue;
        }
        let y: Vec<f64> = col
            .iter()
            .map(|&a| {
                let a = a.clamp(eps, 1.0 - eps);
                (a / (1.0 - a)).ln()
            })
            .collect();
        let y_mean = y.iter().sum::<f64>() / n;
        let sxy: f64 = t.iter().zip(&y).map(|(ti, yi)| (ti - t_mean) * (yi - y_mean)).sum();
        s_hat.push(factor * sxy / sxx);
        degenerate.push(false);
    }
    Ok(LlsEstimate {
        s_hat,
        ploidy,
        degenerate,
    })
}

/// Root mean square error between an estimate and the truth.
pub fn rmse(est: &[f64], truth: &[f64]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: est.len(),
        });
    }
    if est.is_empty() {
        return Err(Error::TooFew { needed: 1, got: 0 });
    }
    let sq: f64 = est.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum();
    Ok((sq / est.len() as f64).sqrt())
}

pub fn posterior_mean(samples: &Array2<f64>) -> Result<Vec<f64>> {
    if samples.nrows() == 0 {
        return Err(Error::TooFew { needed: 1, got: 0 });
    }
    Ok(samples.mean_axis(Axis(0)).expect("non-empty").to_vec())
}

/// Candidate points examined by [`posterior_mode_kde`]; larger sample sets
/// are strided down to this many.
pub const MODE_CANDIDATES: usize = 4000;

/// Sample point maximizing a product-Gaussian KDE with Scott bandwidths
/// `h_j = sd_j * n^(-1/(d+4))`. Constant coordinates are returned as-is.
pub fn posterior_mode_kde(samples: &Array2<f64>) -> Result<Vec<f64>> {
    let (n, d) = samples.dim();
    if n < 2 {
        return Err(Error::TooFew { needed: 2, got: n });
    }
    let mean = posterior_mean(samples)?;
    let factor = (n as f64).powf(-1.0 / (d as f64 + 4.0));
    let bandwidth: Vec<f64> = (0..d)
        .map(|j| {
            let var = samples
                .column(j)
                .iter()
                .map(|v| (v - mean[j]).powi(2))
                .sum::<f64>()
                / (n as f64 - 1.0);
            var.sqrt() * factor
        })
        .collect();
    let active: Vec<usize> = (0..d).filter(|&j| bandwidth[j] > 0.0).collect();
    if active.is_empty() {
        return Ok(samples.row(0).to_vec());
    }

    let rows: Vec<Vec<f64>> = samples
        .rows()
        .into_iter()
        .map(|r| active.iter().map(|&j| r[j]).collect())
        .collect();
    let inv_h: Vec<f64> = active.iter().map(|&j| 1.0 / bandwidth[j]).collect();
    let stride = n.div_ceil(MODE_CANDIDATES).max(1);
    let candidates: Vec<usize> = (0..n).step_by(stride).collect();
    let density: Vec<f64> = candidates
        .par_iter()
        .map(|&c| {
            let x = &rows[c];
            rows.iter()
                .map(|y| {
                    let q: f64 = x
                        .iter()
                        .zip(y)
                        .zip(&inv_h)
                        .map(|((a, b), ih)| ((a - b) * ih).powi(2))
                        .sum();
                    (-0.5 * q).exp()
                })
                .sum()
        })
        .collect();
    let best = density
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
        .0;
    Ok(samples.row(candidates[best]).to_vec())
}

/// Which posterior summary a Bayesian method reports as its point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Summary {
    #[default]
    Mean,
    Mode,
}

/// A benchmark scenario: true parameters and the simulator around them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub s_true: Vec<f64>,
    pub dominance: Vec<f64>,
    #[serde(default)]
    pub mode: SelectionMode,
    pub rmap: RecombinationMap,
    pub sim: SimConfig,
    /// Number of observed datasets `N_r`.
    pub n_reps: usize,
}

impl Scenario {
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            sim: self.sim.clone(),
            dominance: self.dominance.clone(),
            mode: self.mode,
            rmap: self.rmap.clone(),
            infer_init_haps: false,
        }
    }

    /// Observed dataset `rep` under `master_seed`.
    pub fn simulate_observation(&self, master_seed: u64, rep: usize) -> Result<Trajectory> {
        let model = FitnessModel::new(self.s_true.clone(), self.dominance.clone(), self.mode)?;
        let wf = WrightFisher::new(model, &self.rmap)?;
        wf.simulate(&self.sim, &mut stream(master_seed, &[1, rep as u64]))
    }
}

pub trait PointEstimator: Sync {
    fn name(&self) -> String;
    fn estimate(&self, obs: &Trajectory, scenario: &Scenario, seed: u64) -> Result<Vec<f64>>;
}

pub struct LlsEstimator {
    pub ploidy: Ploidy,
}

impl PointEstimator for LlsEstimator {
    fn name(&self) -> String {
        "LLS".into()
    }

    fn estimate(&self, obs: &Trajectory, scenario: &Scenario, _seed: u64) -> Result<Vec<f64>> {
        Ok(lls_estimate(obs, self.ploidy, Some(scenario.sim.pop_size))?.s_hat)
    }
}

/// Returns the true coefficients; a sanity check for the benchmark plumbing.
pub struct TruthEstimator;

impl PointEstimator for TruthEstimator {
    fn name(&self) -> String {
        "truth".into()
    }

    fn estimate(&self, _obs: &Trajectory, scenario: &Scenario, _seed: u64) -> Result<Vec<f64>> {
        Ok(scenario.s_true.clone())
    }
}

/// Signature-kernel scoring-rule posterior sampled from the LLS start.
pub struct GblfiEstimator {
    pub mcmc: McmcConfig,
    pub kernel: KernelConfig,
    pub summary: Summary,
    /// Uniform prior bounds on every selection coefficient.
    pub prior_bounds: (f64, f64),
}

impl GblfiEstimator {
    pub fn start_point(&self, obs: &Trajectory, pop_size: u64) -> Result<Vec<f64>> {
        let (lo, hi) = self.prior_bounds;
        let margin = 1e-3 * (hi - lo);
        Ok(lls_estimate(obs, Ploidy::Diploid, Some(pop_size))?
            .s_hat
            .into_iter()
            .map(|s| s.clamp(lo + margin, hi - margin))
            .collect())
    }
}

impl PointEstimator for GblfiEstimator {
    fn name(&self) -> String {
        "GBLFI-SigSR".into()
    }

    fn estimate(&self, obs: &Trajectory, scenario: &Scenario, seed: u64) -> Result<Vec<f64>> {
        let spec = scenario.model_spec();
        let (lo, hi) = self.prior_bounds;
        let space = spec.default_space(lo, hi, 1.0);
        let target = SigScoreTarget::new(vec![obs.clone()], spec, self.mcmc.m, self.kernel)?;
        let init = self.start_point(obs, scenario.sim.pop_size)?;
        let cfg = McmcConfig {
            seed,
            ..self.mcmc.clone()
        };
        let out = run_chain(&init, &space, &target, &cfg)?;
        match self.summary {
            Summary::Mean => posterior_mean(&out.samples),
            Summary::Mode => posterior_mode_kde(&out.samples),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub scenario: String,
    pub method: String,
    pub mean_rmse: f64,
    pub sd_rmse: f64,
    pub rmses: Vec<f64>,
    /// Set when only one repetition was run, so the standard deviation is undefined.
    pub single_rep: bool,
}

impl BenchmarkRow {
    /// `mean (sd)` cell as printed in RMSE tables.
    pub fn cell(&self) -> String {
        format!("{:.4} ({:.4})", self.mean_rmse, self.sd_rmse)
    }
}

/// Simulates `n_reps` observed datasets and scores `estimator` on each.
pub fn benchmark_scenario(
    scenario: &Scenario,
    estimator: &dyn PointEstimator,
    master_seed: u64,
) -> Result<BenchmarkRow> {
    if scenario.n_reps == 0 {
        return Err(Error::TooFew { needed: 1, got: 0 });
    }
    let rmses: Vec<f64> = (0..scenario.n_reps)
        .into_par_iter()
        .map(|rep| {
            let obs = scenario.simulate_observation(master_seed, rep)?;
            let est = estimator.estimate(&obs, scenario, derive_seed(master_seed, &[2, rep as u64]))?;
            rmse(&est, &scenario.s_true)
        })
        .collect::<Result<_>>()?;
    let n = rmses.len() as f64;
    let mean = rmses.iter().sum::<f64>() / n;
    let single_rep = rmses.len() == 1;
    let sd = if single_rep {
        0.0
    } else {
        (rmses.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(BenchmarkRow {
        scenario: scenario.name.clone(),
        method: estimator.name(),
        mean_rmse: mean,
        sd_rmse: sd,
        rmses,
        single_rep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wf::HaplotypeFrequencies;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn logit_linear(a0: f64, slope: f64, times: &[i64]) -> Trajectory {
        let l0 = (a0 / (1.0 - a0)).ln();
        let freqs = Array2::from_shape_fn((times.len(), 1), |(r, _)| {
            let l = l0 + slope * times[r] as f64;
            1.0 / (1.0 + (-l).exp())
        });
        Trajectory::new(times.to_vec(), freqs).unwrap()
    }

    #[test]
    fn lls_recovers_exact_slopes() {
        let times: Vec<i64> = (0..=10).map(|k| k * 10).collect();
        let diploid = logit_linear(0.5, 0.05 / 2.0, &times);
        let est = lls_estimate(&diploid, Ploidy::Diploid, None).unwrap();
        assert_abs_diff_eq!(est.s_hat[0], 0.05, epsilon = 1e-12);
        let haploid = logit_linear(0.3, 0.03, &times);
        let est = lls_estimate(&haploid, Ploidy::Haploid, None).unwrap();
        assert_abs_diff_eq!(est.s_hat[0], 0.03, epsilon = 1e-12);
    }

    #[test]
    fn lls_constant_and_boundary() {
        let t = Trajectory::new(vec![0, 10, 20], array![[0.5, 0.0], [0.5, 0.0], [0.5, 0.0]]).unwrap();
        let est = lls_estimate(&t, Ploidy::Diploid, Some(100)).unwrap();
        assert_eq!(est.s_hat, vec![0.0, 0.0]);
        assert_eq!(est.degenerate, vec![false, true]);
        let short = Trajectory::new(vec![0], array![[0.5]]).unwrap();
        assert!(lls_estimate(&short, Ploidy::Diploid, None).is_err());
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            rmse(&[0.02, 0.066], &[0.02, 0.07]).unwrap(),
            (0.004f64 * 0.004 / 2.0).sqrt(),
            epsilon = 1e-15
        );
        assert_eq!(rmse(&[0.0], &[0.05]).unwrap(), 0.05);
        assert!(rmse(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn mean_examples() {
        assert_eq!(posterior_mean(&array![[0.3, 0.4]]).unwrap(), vec![0.3, 0.4]);
        assert_eq!(
            posterior_mean(&array![[0.0, 0.0], [1.0, 1.0]]).unwrap(),
            vec![0.5, 0.5]
        );
        let sym = array![[1.5, -2.0], [0.5, 0.0], [1.2, -1.3], [0.8, -0.7]];
        let m = posterior_mean(&sym).unwrap();
        assert_abs_diff_eq!(m[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], -1.0, epsilon = 1e-15);
        assert!(posterior_mean(&Array2::zeros((0, 2))).is_err());
    }

    #[test]
    fn mode_of_constant_samples() {
        let s = Array2::from_shape_fn((10, 2), |(_, c)| 0.1 * (c + 1) as f64);
        assert_eq!(posterior_mode_kde(&s).unwrap(), vec![0.1, 0.2]);
        let partly = array![[0.5, 1.0], [0.5, 2.0], [0.5, 2.1]];
        let m = posterior_mode_kde(&partly).unwrap();
        assert_eq!(m[0], 0.5);
        assert!(posterior_mode_kde(&array![[0.5]]).is_err());
    }

    fn scenario(n_reps: usize) -> Scenario {
        Scenario {
            name: "test".into(),
            s_true: vec![0.02, 0.02],
            dominance: vec![0.5, 0.5],
            mode: SelectionMode::Standard,
            rmap: RecombinationMap::none(2),
            sim: SimConfig {
                pop_size: 1000,
                t0: 0,
                intervals: 5,
                delta_t: 10,
                init_haps: HaplotypeFrequencies::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
                seed: 0,
            },
            n_reps,
        }
    }

    #[test]
    fn truth_method_scores_zero() {
        let row = benchmark_scenario(&scenario(3), &TruthEstimator, 5).unwrap();
        assert_eq!(row.rmses, vec![0.0; 3]);
        assert_eq!((row.mean_rmse, row.sd_rmse), (0.0, 0.0));
        assert!(!row.single_rep);
    }

    #[test]
    fn single_rep_flags_sd() {
        let row = benchmark_scenario(&scenario(1), &LlsEstimator { ploidy: Ploidy::Diploid }, 5).unwrap();
        assert!(row.single_rep);
        assert_eq!(row.sd_rmse, 0.0);
    }

    #[test]
    fn benchmark_is_reproducible() {
        let lls = LlsEstimator {
            ploidy: Ploidy::Diploid,
        };
        let a = benchmark_scenario(&scenario(4), &lls, 9).unwrap();
        let b = benchmark_scenario(&scenario(4), &lls, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rmses.len(), 4);
    }
}
