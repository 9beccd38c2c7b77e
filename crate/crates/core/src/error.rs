use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid haplotype frequencies: {0}")]
    InvalidHaplotypes(String),

    #[error("invalid fitness model: {0}")]
    InvalidFitness(String),

    #[error("invalid recombination map: {0}")]
    InvalidRecombination(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("haplotype index {index} out of range for {loci} loci")]
    HaplotypeIndex { index: usize, loci: usize },

    #[error("allele frequencies are required for frequency-dependent selection")]
    MissingAlleleFrequencies,

    #[error("non-positive fitness {0}; parameter point rejected")]
    NonPositiveFitness(f64),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },

    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),

    #[error("parameter outside support: {0}")]
    OutOfSupport(String),

    #[error("invalid MCMC config: {0}")]
    InvalidMcmc(String),
}

pub type Result<T> = std::result::Result<T, Error>;
