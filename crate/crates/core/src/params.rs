//! Constrained parameter blocks and their bijections to unconstrained space.
//!
//! Interval coordinates use the logit / log maps; a simplex block of `d`
//! components is parameterized by `t` in `R^d` with `x = softmax(t)` and an
//! auxiliary `r = sum(t)`, so the map `t -> (x_1..x_{d-1}, r)` is square.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PriorSpec {
    /// Constant density `1 / (high - low)` on a bounded interval.
    Uniform,
    /// Improper constant density.
    Flat,
    Normal { mean: f64, sd: f64 },
}

impl PriorSpec {
    pub fn standard_normal() -> Self {
        PriorSpec::Normal { mean: 0.0, sd: 1.0 }
    }

    fn log_density(&self, x: f64, low: f64, high: f64) -> f64 {
        match *self {
            PriorSpec::Uniform => -(high - low).ln(),
            PriorSpec::Flat => 0.0,
            PriorSpec::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * LN_2PI
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Block {
    Interval {
        /// Base name; coordinates are called `{label}_1 .. {label}_count`.
        label: String,
        #[serde(default = "neg_inf", with = "infinite_f64")]
        low: f64,
        #[serde(default = "pos_inf", with = "infinite_f64")]
        high: f64,
        count: usize,
        prior: PriorSpec,
    },
    Simplex {
        label: String,
        dim: usize,
        dirichlet_alpha: f64,
        #[serde(default = "PriorSpec::standard_normal")]
        aux_prior: PriorSpec,
    },
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

/// JSON has no infinities; they are written as `null`.
mod infinite_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        // The sign of a null bound is fixed up by ParameterSpace::new.
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl Block {
    /// Selection-coefficient style block on `(low, high)` with a uniform prior.
    pub fn uniform(label: &str, low: f64, high: f64, count: usize) -> Self {
        Block::Interval {
            label: label.into(),
            low,
            high,
            count,
            prior: PriorSpec::Uniform,
        }
    }

    pub fn dirichlet(label: &str, dim: usize, alpha: f64) -> Self {
        Block::Simplex {
            label: label.into(),
            dim,
            dirichlet_alpha: alpha,
            aux_prior: PriorSpec::standard_normal(),
        }
    }

    pub fn unconstrained_dim(&self) -> usize {
        match self {
            Block::Interval { count, .. } => *count,
            Block::Simplex { dim, .. } => *dim,
        }
    }

    /// Constrained dimension; a simplex block carries its auxiliary `r` last.
    pub fn constrained_dim(&self) -> usize {
        match self {
            Block::Interval { count, .. } => *count,
            Block::Simplex { dim, .. } => dim + 1,
        }
    }

    fn names(&self) -> Vec<String> {
        match self {
            Block::Interval { label, count, .. } => {
                (1..=*count).map(|i| format!("{label}_{i}")).collect()
            }
            Block::Simplex { label, dim, .. } => (1..=*dim)
                .map(|i| format!("{label}_{i}"))
                .chain(std::iter::once("r_aux".to_string()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Block>", into = "Vec<Block>")]
pub struct ParameterSpace {
    blocks: Vec<Block>,
}

impl TryFrom<Vec<Block>> for ParameterSpace {
    type Error = Error;

    fn try_from(blocks: Vec<Block>) -> Result<Self> {
        Self::new(blocks)
    }
}

impl From<ParameterSpace> for Vec<Block> {
    fn from(p: ParameterSpace) -> Self {
        p.blocks
    }
}

impl ParameterSpace {
    pub fn new(mut blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidSpace("no parameter blocks".into()));
        }
        for b in blocks.iter_mut() {
            match b {
                Block::Interval {
                    low,
                    high,
                    count,
                    prior,
                    ..
                } => {
                    if low.is_nan() {
                        *low = f64::NEG_INFINITY;
                    }
                    if high.is_nan() {
                        *high = f64::INFINITY;
                    }
                    if *count == 0 {
                        return Err(Error::InvalidSpace("interval block with count 0".into()));
                    }
                    if !(low < high) || *low == f64::INFINITY || *high == f64::NEG_INFINITY {
                        return Err(Error::InvalidSpace(format!("bounds ({low}, {high})")));
                    }
                    if *prior == PriorSpec::Uniform && !(low.is_finite() && high.is_finite()) {
                        return Err(Error::InvalidSpace(
                            "uniform prior needs finite bounds".into(),
                        ));
                    }
                    if let PriorSpec::Normal { sd, .. } = prior {
                        if !(*sd > 0.0) {
                            return Err(Error::InvalidSpace("normal prior sd must be > 0".into()));
                        }
                    }
                }
                Block::Simplex {
                    dim,
                    dirichlet_alpha,
                    aux_prior,
                    ..
                } => {
                    if *dim < 2 {
                        return Err(Error::InvalidSpace("simplex needs dim >= 2".into()));
                    }
                    if !(*dirichlet_alpha > 0.0) {
                        return Err(Error::InvalidSpace("Dirichlet alpha must be > 0".into()));
                    }
                    if *aux_prior == PriorSpec::Uniform {
                        return Err(Error::InvalidSpace(
                            "auxiliary r lives on the real line; uniform prior not allowed".into(),
                        ));
                    }
                }
            }
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn unconstrained_dim(&self) -> usize {
        self.blocks.iter().map(Block::unconstrained_dim).sum()
    }

    pub fn constrained_dim(&self) -> usize {
        self.blocks.iter().map(Block::constrained_dim).sum()
    }

    /// Column names of the constrained vector.
    pub fn names(&self) -> Vec<String> {
        self.blocks.iter().flat_map(Block::names).collect()
    }

    /// Maps unconstrained `z` to `theta` and returns `log |det d theta / dz|`.
    pub fn constrain(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        if z.len() != self.unconstrained_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.unconstrained_dim(),
                got: z.len(),
            });
        }
        if let Some(v) = z.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("unconstrained coordinate {v}")));
        }
        let mut theta = Vec::with_capacity(self.constrained_dim());
        let mut log_jac = 0.0;
        let mut at = 0;
        for b in &self.blocks {
            let n = b.unconstrained_dim();
            let zb = &z[at..at + n];
            at += n;
            match b {
                Block::Interval { low, high, .. } => {
                    for &zi in zb {
                        let (x, lj) = interval_forward(zi, *low, *high);
                        theta.push(x);
                        log_jac += lj;
                    }
                }
                Block::Simplex { .. } => {
                    let (x, r, lj) = simplex_forward(zb);
                    theta.extend(x);
                    theta.push(r);
                    log_jac += lj;
                }
            }
        }
        Ok((theta, log_jac))
    }

    /// Inverse of [`constrain`](Self::constrain) on interior points.
    pub fn unconstrain(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.constrained_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.constrained_dim(),
                got: theta.len(),
            });
        }
        let mut z = Vec::with_capacity(self.unconstrained_dim());
        let mut at = 0;
        for b in &self.blocks {
            let n = b.constrained_dim();
            let tb = &theta[at..at + n];
            at += n;
            match b {
                Block::Interval { low, high, .. } => {
                    for &x in tb {
                        z.push(interval_inverse(x, *low, *high)?);
                    }
                }
                Block::Simplex { dim, .. } => {
                    let (x, r) = tb.split_at(*dim);
                    z.extend(simplex_inverse(x, r[0])?);
                }
            }
        }
        Ok(z)
    }

    /// Sum of block log prior densities; `-inf` outside the support.
    pub fn log_prior(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.constrained_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.constrained_dim(),
                got: theta.len(),
            });
        }
        let mut total = 0.0;
        let mut at = 0;
        for b in &self.blocks {
            let n = b.constrained_dim();
            let tb = &theta[at..at + n];
            at += n;
            match b {
                Block::Interval {
                    low, high, prior, ..
                } => {
                    for &x in tb {
                        if !(x > *low && x < *high) {
                            return Ok(f64::NEG_INFINITY);
                        }
                        total += prior.log_density(x, *low, *high);
                    }
                }
                Block::Simplex {
                    dim,
                    dirichlet_alpha,
                    aux_prior,
                    ..
                } => {
                    let (x, r) = tb.split_at(*dim);
                    let lp = dirichlet_log_density(x, *dirichlet_alpha);
                    if !lp.is_finite() || !r[0].is_finite() {
                        return Ok(f64::NEG_INFINITY);
                    }
                    total += lp + aux_prior.log_density(r[0], f64::NEG_INFINITY, f64::INFINITY);
                }
            }
        }
        Ok(total)
    }

    /// Whether `theta` lies strictly inside every constraint.
    pub fn contains(&self, theta: &[f64]) -> bool {
        self.log_prior(theta).map(|lp| lp > f64::NEG_INFINITY).unwrap_or(false)
    }
}

fn log_sigmoid(z: f64) -> f64 {
    // log(1 / (1 + e^-z)) = -softplus(-z)
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn interval_forward(z: f64, low: f64, high: f64) -> (f64, f64) {
    match (low.is_finite(), high.is_finite()) {
        (true, true) => {
            let x = low + (high - low) * sigmoid(z);
            // log[(x - a)(b - x)/(b - a)] evaluated from z without cancellation
            let lj = (high - low).ln() + log_sigmoid(z) + log_sigmoid(-z);
            (x, lj)
        }
        (true, false) => (low + z.exp(), z),
        (false, true) => (high - z.exp(), z),
        (false, false) => (z, 0.0),
    }
}

fn interval_inverse(x: f64, low: f64, high: f64) -> Result<f64> {
    if !(x > low && x < high) {
        return Err(Error::OutOfSupport(format!(
            "{x} not strictly inside ({low}, {high})"
        )));
    }
    Ok(match (low.is_finite(), high.is_finite()) {
        (true, true) => {
            let (a, b) = (x - low, high - x);
            a.ln() - b.ln()
        }
        (true, false) => (x - low).ln(),
        (false, true) => (high - x).ln(),
        (false, false) => x,
    })
}

fn log_sum_exp(t: &[f64]) -> f64 {
    let max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + t.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `t -> (softmax(t), sum(t))` with `log |det| = log d + r - d * logsumexp(t)`.
fn simplex_forward(t: &[f64]) -> (Vec<f64>, f64, f64) {
    let d = t.len() as f64;
    let lse = log_sum_exp(t);
    let x = t.iter().map(|v| (v - lse).exp()).collect();
    let r: f64 = t.iter().sum();
    (x, r, d.ln() + r - d * lse)
}

fn simplex_inverse(x: &[f64], r: f64) -> Result<Vec<f64>> {
    if x.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
        return Err(Error::OutOfSupport(
            "simplex coordinates must lie strictly inside (0, 1)".into(),
        ));
    }
    let total: f64 = x.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::OutOfSupport(format!("simplex coordinates sum to {total}")));
    }
    if !r.is_finite() {
        return Err(Error::NonFinite("auxiliary r".into()));
    }
    let logs: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let shift = (r - logs.iter().sum::<f64>()) / x.len() as f64;
    Ok(logs.into_iter().map(|l| l + shift).collect())
}

/// Symmetric Dirichlet log density; `-inf` off the open simplex.
pub fn dirichlet_log_density(x: &[f64], alpha: f64) -> f64 {
    if x.iter().any(|v| !(*v > 0.0)) {
        return f64::NEG_INFINITY;
    }
    let d = x.len() as f64;
    ln_gamma(d * alpha) - d * ln_gamma(alpha) + (alpha - 1.0) * x.iter().map(|v| v.ln()).sum::<f64>()
}
