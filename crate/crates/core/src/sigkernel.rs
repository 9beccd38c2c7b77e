//! Signature kernel between piecewise-linear paths and the unbiased
//! kernel-score estimator built on it.
//!
//! The signature kernel of two paths lifted through a static kernel `k`
//! solves the Goursat problem
//!
//! ```text
//! d^2 u / ds dt = (d^2 k(x_s, y_t) / ds dt) * u,   u(0, .) = u(., 0) = 1
//! ```
//!
//! and equals `u(1, 1)`. It is solved with an explicit second-order scheme on
//! a grid that refines each observation interval into `2^dyadic_order` cells.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wf::Trajectory;

/// Largest accepted dyadic refinement.
pub const MAX_DYADIC_ORDER: u32 = 12;

/// Piecewise-linear path on `[0, 1]`; rows of `points` are the path values
/// at `times`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    times: Vec<f64>,
    points: Array2<f64>,
}

impl Path {
    pub fn new(times: Vec<f64>, points: Array2<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::TooFew {
                needed: 2,
                got: times.len(),
            });
        }
        if points.nrows() != times.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: points.nrows(),
            });
        }
        if times[0] != 0.0 || times[times.len() - 1] != 1.0 {
            return Err(Error::InvalidTrajectory("path times must span [0, 1]".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTrajectory(
                "path times must be strictly increasing".into(),
            ));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("path point".into()));
        }
        Ok(Self { times, points })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn channels(&self) -> usize {
        self.points.ncols()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linear interpolation placing `2^order - 1` extra points inside every segment.
    fn refined(&self, order: u32) -> Array2<f64> {
        let sub = 1usize << order;
        let m = self.len();
        let d = self.channels();
        let rows = (m - 1) * sub + 1;
        let mut out = Array2::zeros((rows, d));
        for seg in 0..m - 1 {
            let a = self.points.row(seg);
            let b = self.points.row(seg + 1);
            for k in 0..sub {
                let frac = k as f64 / sub as f64;
                let mut row = out.row_mut(seg * sub + k);
                for c in 0..d {
                    row[c] = a[c] + frac * (b[c] - a[c]);
                }
            }
        }
        out.row_mut(rows - 1).assign(&self.points.row(m - 1));
        out
    }
}

/// Converts a trajectory into a path on `[0, 1]`, optionally with a leading
/// time channel.
pub fn preprocess(traj: &Trajectory, add_time: bool) -> Result<Path> {
    let m = traj.len();
    if m < 2 {
        return Err(Error::TooFew { needed: 2, got: m });
    }
    let t = traj.times();
    let (start, end) = (t[0] as f64, t[m - 1] as f64);
    let mut times: Vec<f64> = t.iter().map(|&v| (v as f64 - start) / (end - start)).collect();
    times[0] = 0.0;
    times[m - 1] = 1.0;
    let offset = usize::from(add_time);
    let mut points = Array2::zeros((m, traj.loci() + offset));
    for (r, row) in traj.freqs().rows().into_iter().enumerate() {
        if add_time {
            points[[r, 0]] = times[r];
        }
        for (c, v) in row.iter().enumerate() {
            points[[r, c + offset]] = *v;
        }
    }
    Path::new(times, points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StaticKernelKind {
    #[default]
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticKernelParams {
    pub kind: StaticKernelKind,
    /// RBF bandwidth: `k(u, v) = exp(-|u - v|^2 / gamma)`. Ignored by the
    /// linear kernel.
    pub gamma: f64,
}

impl Default for StaticKernelParams {
    fn default() -> Self {
        Self::rbf(0.1)
    }
}

impl StaticKernelParams {
    pub fn rbf(gamma: f64) -> Self {
        Self {
            kind: StaticKernelKind::Rbf,
            gamma,
        }
    }

    pub fn linear() -> Self {
        Self {
            kind: StaticKernelKind::Linear,
            gamma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == StaticKernelKind::Rbf && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "RBF gamma must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    #[inline]
    fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        match self.kind {
            StaticKernelKind::Rbf => {
                let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / self.gamma).exp()
            }
            StaticKernelKind::Linear => u.iter().zip(v).map(|(a, b)| a * b).sum(),
        }
    }
}

pub fn static_kernel(u: &[f64], v: &[f64], p: &StaticKernelParams) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    Ok(p.eval(u, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdeConfig {
    pub dyadic_order: u32,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self { dyadic_order: 2 }
    }
}

impl PdeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dyadic_order > MAX_DYADIC_ORDER {
            return Err(Error::InvalidConfig(format!(
                "dyadic order {} exceeds {MAX_DYADIC_ORDER}",
                self.dyadic_order
            )));
        }
        Ok(())
    }
}

/// Signature kernel of `x` and `y` lifted through the static kernel `p`.
pub fn goursat_solve(x: &Path, y: &Path, p: &StaticKernelParams, cfg: &PdeConfig) -> Result<f64> {
    if x.channels() != y.channels() {
        return Err(Error::DimensionMismatch {
            expected: x.channels(),
            got: y.channels(),
        });
    }
    p.validate()?;
    cfg.validate()?;
    let xs = x.refined(cfg.dyadic_order);
    let ys = y.refined(cfg.dyadic_order);
    solve_refined(&xs, &ys, p)
}

fn solve_refined(xs: &Array2<f64>, ys: &Array2<f64>, p: &StaticKernelParams) -> Result<f64> {
    let (nx, ny) = (xs.nrows(), ys.nrows());
    let xr: Vec<&[f64]> = xs.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();
    let yr: Vec<&[f64]> = ys.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();

    // Static Gram rows are produced on the fly; only two are live at a time.
    let gram_row = |i: usize, out: &mut Vec<f64>| {
        out.clear();
        out.extend(yr.iter().map(|y| p.eval(xr[i], y)));
    };
    let mut g_prev = Vec::with_capacity(ny);
    let mut g_next = Vec::with_capacity(ny);
    gram_row(0, &mut g_prev);
    if g_prev.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("static kernel value".into()));
    }

    let mut u_prev = vec![1.0; ny];
    let mut u_next = vec![1.0; ny];
    for i in 0..nx - 1 {
        gram_row(i + 1, &mut g_next);
        if g_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("static kernel value".into()));
        }
        u_next[0] = 1.0;
        for j in 0..ny - 1 {
            let inc = g_next[j + 1] - g_next[j] - g_prev[j + 1] + g_prev[j];
            let inc2 = inc * inc / 12.0;
            u_next[j + 1] =
                (u_next[j] + u_prev[j + 1]) * (1.0 + 0.5 * inc + inc2) - u_prev[j] * (1.0 - inc2);
        }
        std::mem::swap(&mut u_prev, &mut u_next);
        std::mem::swap(&mut g_prev, &mut g_next);
    }
    let out = u_prev[ny - 1];
    if !out.is_finite() {
        return Err(Error::NonFinite("signature kernel".into()));
    }
    Ok(out)
}

/// Settings shared by every kernel evaluation in a score estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub static_kernel: StaticKernelParams,
    pub pde: PdeConfig,
    pub add_time: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            static_kernel: StaticKernelParams::default(),
            pde: PdeConfig::default(),
            add_time: true,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        self.static_kernel.validate()?;
        self.pde.validate()
    }
}

/// Signature kernel between two trajectories, preprocessed as in the score.
pub fn trajectory_kernel(a: &Trajectory, b: &Trajectory, cfg: &KernelConfig) -> Result<f64> {
    cfg.validate()?;
    goursat_solve(
        &preprocess(a, cfg.add_time)?,
        &preprocess(b, cfg.add_time)?,
        &cfg.static_kernel,
        &cfg.pde,
    )
}

/// Unbiased estimate of the signature kernel score of the simulator
/// distribution at `obs`:
///
/// `1/(m(m-1)) sum_{j != q} k(x_j, x_q) - 2/m sum_j k(x_j, obs)`.
pub fn sig_score_unbiased(sims: &[Trajectory], obs: &Trajectory, cfg: &KernelConfig) -> Result<f64> {
    let m = sims.len();
    if m < 2 {
        return Err(Error::TooFew { needed: 2, got: m });
    }
    cfg.validate()?;
    if let Some(bad) = sims.iter().find(|s| s.times() != obs.times()) {
        return Err(Error::InvalidTrajectory(format!(
            "simulated time grid {:?} differs from observed {:?}",
            bad.times(),
            obs.times()
        )));
    }
    let order = cfg.pde.dyadic_order;
    let refine = |t: &Trajectory| -> Result<Array2<f64>> {
        Ok(preprocess(t, cfg.add_time)?.refined(order))
    };
    let obs_path = refine(obs)?;
    let paths: Vec<Array2<f64>> = sims.iter().map(refine).collect::<Result<_>>()?;
    if paths.iter().any(|p| p.ncols() != obs_path.ncols()) {
        return Err(Error::DimensionMismatch {
            expected: obs_path.ncols(),
            got: paths[0].ncols(),
        });
    }

    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|j| (j + 1..m).map(move |q| (j, q)))
        .collect();
    let cross: Vec<f64> = pairs
        .par_iter()
        .map(|&(j, q)| solve_refined(&paths[j], &paths[q], &cfg.static_kernel))
        .collect::<Result<_>>()?;
    let to_obs: Vec<f64> = paths
        .par_iter()
        .map(|p| solve_refined(p, &obs_path, &cfg.static_kernel))
        .collect::<Result<_>>()?;

    let mf = m as f64;
    let sim_term = 2.0 * compensated_sum(&cross) / (mf * (mf - 1.0));
    let obs_term = 2.0 * compensated_sum(&to_obs) / mf;
    Ok(sim_term - obs_term)
}

/// Neumaier-compensated sum over a fixed order.
pub(crate) fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
