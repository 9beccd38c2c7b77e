//! Discrete-time multi-locus Wright-Fisher simulation.
//!
//! Haplotypes over `loci` biallelic loci are indexed lexicographically with
//! locus 1 as the most significant bit; allele 1 is the focal (selected)
//! allele. One generation is: diploid viability selection on random-union
//! zygotes, gamete formation with independent crossovers between adjacent
//! loci, then multinomial resampling of `2N` gametes.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// Allele carried by haplotype `hap` at locus `locus` (0-based, locus 0 most significant).
#[inline]
pub fn allele_at(hap: usize, locus: usize, loci: usize) -> usize {
    (hap >> (loci - 1 - locus)) & 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HaplotypeFrequencies {
    values: Vec<f64>,
    loci: usize,
}

impl HaplotypeFrequencies {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidHaplotypes(format!(
                "length {n} is not 2^l for l >= 1"
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidHaplotypes(format!("entry {v} outside [0,1]")));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidHaplotypes(format!("entries sum to {total}")));
        }
        Ok(Self {
            loci: n.trailing_zeros() as usize,
            values,
        })
    }

    /// Builds from non-negative weights, rescaling them to sum to one.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidHaplotypes(
                "weights must be finite, non-negative and not all zero".into(),
            ));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(loci: usize) -> Self {
        let n = 1usize << loci;
        Self {
            values: vec![1.0 / n as f64; n],
            loci,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn loci(&self) -> usize {
        self.loci
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Internal constructor for values already known to be a distribution
    /// up to rounding; clamps tiny negatives and renormalizes.
    fn from_normalized(mut values: Vec<f64>, loci: usize) -> Self {
        for v in values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > f64::EPSILON {
            values.iter_mut().for_each(|v| *v /= total);
        }
        for v in values.iter_mut() {
            if *v > 1.0 {
                *v = 1.0;
            }
        }
        Self { values, loci }
    }
}

impl TryFrom<Vec<f64>> for HaplotypeFrequencies {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<HaplotypeFrequencies> for Vec<f64> {
    fn from(h: HaplotypeFrequencies) -> Self {
        h.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    #[default]
    Standard,
    /// Negative frequency-dependent selection: the effective coefficient at
    /// each locus is `s * a`, with `a` the focal allele frequency before
    /// selection in the current generation.
    Nfds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessModel {
    pub s: Vec<f64>,
    pub dominance: Vec<f64>,
    #[serde(default)]
    pub mode: SelectionMode,
}

impl FitnessModel {
    pub fn new(s: Vec<f64>, dominance: Vec<f64>, mode: SelectionMode) -> Result<Self> {
        let model = Self { s, dominance, mode };
        model.validate()?;
        Ok(model)
    }

    /// Additive dominance (`h = 0.5`) at every locus.
    pub fn additive(s: Vec<f64>, mode: SelectionMode) -> Result<Self> {
        let n = s.len();
        Self::new(s, vec![0.5; n], mode)
    }

    pub fn loci(&self) -> usize {
        self.s.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.s.is_empty() {
            return Err(Error::InvalidFitness("need at least one locus".into()));
        }
        if self.dominance.len() != self.s.len() {
            return Err(Error::DimensionMismatch {
                expected: self.s.len(),
                got: self.dominance.len(),
            });
        }
        if let Some(h) = self.dominance.iter().find(|h| !(0.0..=1.0).contains(*h)) {
            return Err(Error::InvalidFitness(format!("dominance {h} outside [0,1]")));
        }
        if let Some(s) = self.s.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidFitness(format!("selection coefficient {s}")));
        }
        Ok(())
    }

    fn effective_s(&self, locus: usize, allele_freqs: Option<&[f64]>) -> Result<f64> {
        match self.mode {
            SelectionMode::Standard => Ok(self.s[locus]),
            SelectionMode::Nfds => {
                let a = allele_freqs.ok_or(Error::MissingAlleleFrequencies)?;
                if a.len() != self.loci() {
                    return Err(Error::DimensionMismatch {
                        expected: self.loci(),
                        got: a.len(),
                    });
                }
                Ok(self.s[locus] * a[locus])
            }
        }
    }
}

/// Fitness of the diploid genotype formed by haplotypes `hap_i` and `hap_j`.
///
/// Per-locus genotype fitness is `1`, `1 + h*s` or `1 + s` for zero, one or
/// two copies of the focal allele; loci combine multiplicatively.
pub fn diploid_fitness(
    model: &FitnessModel,
    hap_i: usize,
    hap_j: usize,
    allele_freqs: Option<&[f64]>,
) -> Result<f64> {
    let loci = model.loci();
    let n = 1usize << loci;
    for &index in &[hap_i, hap_j] {
        if index >= n {
            return Err(Error::HaplotypeIndex { index, loci });
        }
    }
    let mut w = 1.0;
    for l in 0..loci {
        let copies = allele_at(hap_i, l, loci) + allele_at(hap_j, l, loci);
        let s = model.effective_s(l, allele_freqs)?;
        w *= match copies {
            0 => 1.0,
            1 => 1.0 + model.dominance[l] * s,
            _ => 1.0 + s,
        };
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecombinationMap {
    pub rates: Vec<f64>,
}

impl RecombinationMap {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        let map = Self { rates };
        map.validate()?;
        Ok(map)
    }

    pub fn none(loci: usize) -> Self {
        Self {
            rates: vec![0.0; loci.saturating_sub(1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.rates.iter().find(|r| !(0.0..=0.5).contains(*r)) {
            return Err(Error::InvalidRecombination(format!(
                "rate {r} outside [0, 0.5]"
            )));
        }
        Ok(())
    }

    pub fn loci(&self) -> usize {
        self.rates.len() + 1
    }
}

/// Offspring gamete distribution for each ordered parental pair.
///
/// Crossover masks over the `loci - 1` intervals are enumerated; a mask bit
/// switches the source parent for all loci to the right of that interval.
#[derive(Debug, Clone)]
struct RecombinationTable {
    loci: usize,
    /// `offspring[i * n + j]` lists `(gamete, probability)`.
    offspring: Vec<Vec<(usize, f64)>>,
}

impl RecombinationTable {
    fn new(rmap: &RecombinationMap) -> Self {
        let loci = rmap.loci();
        let n = 1usize << loci;
        let intervals = loci - 1;
        let masks: Vec<(u32, f64)> = (0..(1u32 << intervals))
            .map(|mask| {
                let p = (0..intervals)
                    .map(|k| {
                        let r = rmap.rates[k];
                        if (mask >> k) & 1 == 1 {
                            r
                        } else {
                            1.0 - r
                        }
                    })
                    .product::<f64>();
                (mask, p)
            })
            .filter(|(_, p)| *p > 0.0)
            .collect();

        let mut offspring = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut out: Vec<(usize, f64)> = Vec::new();
                for &(mask, p) in &masks {
                    let mut from_j = false;
                    let mut gamete = 0usize;
                    for l in 0..loci {
                        if l > 0 && (mask >> (l - 1)) & 1 == 1 {
                            from_j = !from_j;
                        }
                        let parent = if from_j { j } else { i };
                        gamete = (gamete << 1) | allele_at(parent, l, loci);
                    }
                    match out.iter_mut().find(|(g, _)| *g == gamete) {
                        Some(entry) => entry.1 += p,
                        None => out.push((gamete, p)),
                    }
                }
                offspring.push(out);
            }
        }
        Self { loci, offspring }
    }

    /// Gamete pool produced by zygote weights `weight(i, j)` (need not be normalized).
    fn gametes(&self, weight: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        let n = 1usize << self.loci;
        let mut out = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let wij = weight(i, j);
                if wij == 0.0 {
                    continue;
                }
                for &(g, p) in &self.offspring[i * n + j] {
                    out[g] += wij * p;
                }
            }
        }
        out
    }
}

fn check_dims(h: &HaplotypeFrequencies, loci: usize) -> Result<()> {
    if h.loci() != loci {
        return Err(Error::DimensionMismatch {
            expected: 1 << loci,
            got: h.len(),
        });
    }
    Ok(())
}

/// Gamete pool after recombination under random union of gametes.
pub fn recombine(h: &HaplotypeFrequencies, rmap: &RecombinationMap) -> Result<HaplotypeFrequencies> {
    rmap.validate()?;
    check_dims(h, rmap.loci())?;
    if rmap.rates.iter().all(|&r| r == 0.0) {
        return Ok(h.clone());
    }
    let table = RecombinationTable::new(rmap);
    let v = h.values();
    let out = table.gametes(|i, j| v[i] * v[j]);
    Ok(HaplotypeFrequencies::from_normalized(out, h.loci()))
}

/// Focal-allele frequency at each locus.
pub fn haplotype_to_allele(h: &HaplotypeFrequencies) -> Vec<f64> {
    let loci = h.loci();
    (0..loci)
        .map(|l| {
            h.values()
                .iter()
                .enumerate()
                .filter(|(hap, _)| allele_at(*hap, l, loci) == 1)
                .map(|(_, f)| f)
                .sum()
        })
        .collect()
}

/// Multi-locus Wright-Fisher dynamics with precomputed genotype fitnesses
/// and recombination table.
#[derive(Debug, Clone)]
pub struct WrightFisher {
    model: FitnessModel,
    table: RecombinationTable,
    /// Genotype fitness matrix, present when selection is frequency-independent.
    fitness: Option<Vec<f64>>,
}

impl WrightFisher {
    pub fn new(model: FitnessModel, rmap: &RecombinationMap) -> Result<Self> {
        model.validate()?;
        rmap.validate()?;
        if model.loci() != rmap.loci() {
            return Err(Error::DimensionMismatch {
                expected: model.loci().saturating_sub(1),
                got: rmap.rates.len(),
            });
        }
        let fitness = match model.mode {
            SelectionMode::Standard => Some(Self::fitness_matrix(&model, None)?),
            SelectionMode::Nfds => None,
        };
        Ok(Self {
            table: RecombinationTable::new(rmap),
            model,
            fitness,
        })
    }

    pub fn model(&self) -> &FitnessModel {
        &self.model
    }

    pub fn loci(&self) -> usize {
        self.model.loci()
    }

    fn fitness_matrix(model: &FitnessModel, allele_freqs: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = 1usize << model.loci();
        let mut w = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let wij = diploid_fitness(model, i, j, allele_freqs)?;
                if !(wij > 0.0) {
                    return Err(Error::NonPositiveFitness(wij));
                }
                w.push(wij);
            }
        }
        Ok(w)
    }

    /// Expected haplotype frequencies in the next generation.
    pub fn deterministic_update(&self, h: &HaplotypeFrequencies) -> Result<HaplotypeFrequencies> {
        check_dims(h, self.loci())?;
        let n = h.len();
        let owned;
        let w: &[f64] = match &self.fitness {
            Some(w) => w,
            None => {
                let a = haplotype_to_allele(h);
                owned = Self::fitness_matrix(&self.model, Some(&a))?;
                &owned
            }
        };
        let v = h.values();
        let mean_fitness: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| w[i * n + j] * v[i] * v[j])
            .sum();
        if !(mean_fitness > 0.0) || !mean_fitness.is_finite() {
            return Err(Error::NonPositiveFitness(mean_fitness));
        }
        let mut out = self.table.gametes(|i, j| w[i * n + j] * v[i] * v[j]);
        out.iter_mut().for_each(|x| *x /= mean_fitness);
        Ok(HaplotypeFrequencies::from_normalized(out, h.loci()))
    }

    /// One generation: deterministic update followed by multinomial drift.
    pub fn generation<R: Rng + ?Sized>(
        &self,
        h: &HaplotypeFrequencies,
        pop_size: u64,
        rng: &mut R,
    ) -> Result<HaplotypeFrequencies> {
        let expected = self.deterministic_update(h)?;
        Ok(resample(&expected, pop_size, rng))
    }

    pub fn simulate<R: Rng + ?Sized>(&self, cfg: &SimConfig, rng: &mut R) -> Result<Trajectory> {
        cfg.validate()?;
        check_dims(&cfg.init_haps, self.loci())?;
        let rows = cfg.intervals + 1;
        let mut freqs = Array2::zeros((rows, self.loci()));
        let mut h = cfg.init_haps.clone();
        for (l, a) in haplotype_to_allele(&h).into_iter().enumerate() {
            freqs[[0, l]] = a;
        }
        for k in 1..rows {
            for _ in 0..cfg.delta_t {
                h = self.generation(&h, cfg.pop_size, rng)?;
            }
            for (l, a) in haplotype_to_allele(&h).into_iter().enumerate() {
                freqs[[k, l]] = a;
            }
        }
        Trajectory::new(cfg.times(), freqs)
    }
}

/// Draws `Multinomial(2N, h) / 2N` by sequential conditional binomials.
pub fn resample<R: Rng + ?Sized>(
    h: &HaplotypeFrequencies,
    pop_size: u64,
    rng: &mut R,
) -> HaplotypeFrequencies {
    let total = 2 * pop_size.max(1);
    let v = h.values();
    let mut counts = vec![0u64; v.len()];
    let mut remaining = total;
    let mut mass_left = 1.0;
    for (k, &p) in v.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k == v.len() - 1 {
            counts[k] = remaining;
            break;
        }
        let q = if mass_left > 0.0 {
            (p / mass_left).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let c = if q >= 1.0 {
            remaining
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(remaining, q)
                .expect("binomial parameters are valid")
                .sample(rng)
        };
        counts[k] = c;
        remaining -= c;
        mass_left -= p;
    }
    let values = counts.iter().map(|&c| c as f64 / total as f64).collect();
    HaplotypeFrequencies::from_normalized(values, h.loci())
}

/// Expected next-generation frequencies under selection and recombination.
pub fn deterministic_update(
    h: &HaplotypeFrequencies,
    model: &FitnessModel,
    rmap: &RecombinationMap,
) -> Result<HaplotypeFrequencies> {
    WrightFisher::new(model.clone(), rmap)?.deterministic_update(h)
}

pub fn wf_generation<R: Rng + ?Sized>(
    h: &HaplotypeFrequencies,
    model: &FitnessModel,
    rmap: &RecombinationMap,
    pop_size: u64,
    rng: &mut R,
) -> Result<HaplotypeFrequencies> {
    WrightFisher::new(model.clone(), rmap)?.generation(h, pop_size, rng)
}

pub fn simulate_trajectory<R: Rng + ?Sized>(
    cfg: &SimConfig,
    model: &FitnessModel,
    rmap: &RecombinationMap,
    rng: &mut R,
) -> Result<Trajectory> {
    WrightFisher::new(model.clone(), rmap)?.simulate(cfg, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Diploid population size `N`; `2N` gametes are sampled per generation.
    pub pop_size: u64,
    pub t0: i64,
    /// Number of sampling intervals `K`; the trajectory has `K + 1` rows.
    pub intervals: usize,
    /// Generations per sampling interval.
    pub delta_t: usize,
    pub init_haps: HaplotypeFrequencies,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pop_size == 0 {
            return Err(Error::InvalidConfig("population size must be positive".into()));
        }
        if self.intervals == 0 || self.delta_t == 0 {
            return Err(Error::InvalidConfig(
                "need at least one sampling interval of at least one generation".into(),
            ));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<i64> {
        (0..=self.intervals)
            .map(|k| self.t0 + (k * self.delta_t) as i64)
            .collect()
    }

    pub fn generations(&self) -> usize {
        self.intervals * self.delta_t
    }
}

/// Focal-allele frequencies observed at increasing generations; rows are
/// time points, columns loci.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<i64>,
    freqs: Array2<f64>,
}

impl Trajectory {
    pub fn new(times: Vec<i64>, freqs: Array2<f64>) -> Result<Self> {
        if times.len() != freqs.nrows() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: freqs.nrows(),
            });
        }
        if freqs.ncols() == 0 {
            return Err(Error::InvalidTrajectory("no loci".into()));
        }
        if let Some(w) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTrajectory(format!(
                "times not strictly increasing at row {}",
                w + 1
            )));
        }
        if let Some(((r, c), v)) = freqs
            .indexed_iter()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidTrajectory(format!(
                "frequency {v} at row {r}, locus {} outside [0,1]",
                c + 1
            )));
        }
        Ok(Self { times, freqs })
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn freqs(&self) -> &Array2<f64> {
        &self.freqs
    }

    pub fn loci(&self) -> usize {
        self.freqs.ncols()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}
