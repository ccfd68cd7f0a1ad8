//! Noisy point evaluation of the target function with accounted cost.
//!
//! An oracle returns one sample of the level-`ℓ` approximation of `f` at a
//! point. The cost charged per sample is `M_ℓ = M0 · h_ℓ^{-α/β}`, taken from
//! a [`CostSchedule`]; the Gaussian model charges that cost while drawing a
//! single normal variate that stands in for the averaged estimator.

pub use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::grid::Domain;
use crate::rng::{tag, StreamKey};

/// A rate or moment index that may be infinite (`β = ∞` for exact
/// evaluations, `p = ∞` for bounded noise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinite,
}

impl Exponent {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Exponent::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Exponent::Finite(v) => Some(*v),
            Exponent::Infinite => None,
        }
    }
}

impl core::fmt::Display for Exponent {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Exponent::Finite(v) => write!(f, "{v}"),
            Exponent::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSchedule {
    pub m0: f64,
    pub alpha: f64,
    pub beta: Exponent,
}

impl CostSchedule {
    /// `M0 · h^{-α/β}`; constant `M0` when `β = ∞`.
    pub fn cost_per_eval(&self, h: f64) -> f64 {
        match self.beta {
            Exponent::Infinite => self.m0,
            Exponent::Finite(beta) => self.m0 * libm::pow(h, -self.alpha / beta),
        }
    }
}

/// Everything an oracle needs to know about the level it samples at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSpec {
    pub level: u32,
    /// Cell size in schedule units.
    pub h: f64,
    /// `M_ℓ`, charged per evaluation.
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("evaluation point {point:?} lies outside the domain")]
    OutsideDomain { point: alloc::vec::Vec<f64> },
}

/// A noisy evaluator of `f`. Implementations must be pure given the key:
/// the same `(x, level, key)` always yields the same bits.
pub trait EvaluationOracle<const D: usize>: Sync {
    fn sample(&self, x: &[f64; D], at: &LevelSpec, key: StreamKey) -> f64;

    /// The noise constant `σ`; reported only.
    fn noise_scale(&self) -> f64 {
        0.0
    }
}

impl<const D: usize, O: EvaluationOracle<D> + ?Sized> EvaluationOracle<D> for &O {
    fn sample(&self, x: &[f64; D], at: &LevelSpec, key: StreamKey) -> f64 {
        (**self).sample(x, at, key)
    }

    fn noise_scale(&self) -> f64 {
        (**self).noise_scale()
    }
}

/// Checks `x` against the domain and returns the sample with its charged cost.
pub fn evaluate<const D: usize, O: EvaluationOracle<D> + ?Sized>(
    oracle: &O,
    domain: &Domain<D>,
    x: &[f64; D],
    at: &LevelSpec,
    key: StreamKey,
) -> Result<Evaluation, OracleError> {
    if !domain.contains(x) {
        return Err(OracleError::OutsideDomain { point: x.to_vec() });
    }
    Ok(Evaluation { value: oracle.sample(x, at, key), cost: at.cost })
}

/// Exact evaluations, `σ = 0`.
#[derive(Debug, Clone, Copy)]
pub struct DeterministicOracle<F>(pub F);

impl<const D: usize, F> EvaluationOracle<D> for DeterministicOracle<F>
where
    F: Fn(&[f64; D]) -> f64 + Sync,
{
    fn sample(&self, x: &[f64; D], _at: &LevelSpec, _key: StreamKey) -> f64 {
        (self.0)(x)
    }
}

/// Variance schedule `factor · h^power`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseVariance {
    pub factor: f64,
    pub power: f64,
}

impl NoiseVariance {
    pub fn at(&self, h: f64) -> f64 {
        self.factor * libm::pow(h, self.power)
    }
}

/// `f(x) + z` with `z ~ N(0, variance(h_ℓ))`, independent per key.
#[derive(Debug, Clone, Copy)]
pub struct GaussianNoiseOracle<F> {
    pub f: F,
    pub variance: NoiseVariance,
}

impl<F> GaussianNoiseOracle<F> {
    pub fn new(f: F, variance: NoiseVariance) -> Self {
        Self { f, variance }
    }
}

impl<const D: usize, F> EvaluationOracle<D> for GaussianNoiseOracle<F>
where
    F: Fn(&[f64; D]) -> f64 + Sync,
{
    fn sample(&self, x: &[f64; D], at: &LevelSpec, key: StreamKey) -> f64 {
        let sd = libm::sqrt(self.variance.at(at.h));
        let z: f64 = StandardNormal.sample(&mut key.rng());
        (self.f)(x) + sd * z
    }

    fn noise_scale(&self) -> f64 {
        libm::sqrt(self.variance.factor)
    }
}

/// Mean of `round(M_ℓ)` i.i.d. draws of `g(x, ·)`.
///
/// Every draw is actually executed, so this is only practical for modest
/// cost schedules.
#[derive(Debug, Clone, Copy)]
pub struct MonteCarloOracle<G> {
    pub sampler: G,
    pub sigma: f64,
}

impl<const D: usize, G> EvaluationOracle<D> for MonteCarloOracle<G>
where
    G: Fn(&[f64; D], &mut dyn RngCore) -> f64 + Sync,
{
    fn sample(&self, x: &[f64; D], at: &LevelSpec, key: StreamKey) -> f64 {
        let draws = libm::round(at.cost).max(1.0) as u64;
        let mut rng = key.derive(tag::MONTE_CARLO).rng();
        let mut sum = 0.0;
        for _ in 0..draws {
            sum += (self.sampler)(x, &mut rng);
        }
        sum / draws as f64
    }

    fn noise_scale(&self) -> f64 {
        self.sigma
    }
}

/// A draw of `N(0, 1)` from any generator; handy for building samplers.
pub fn standard_normal(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}
