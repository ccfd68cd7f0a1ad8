//! Built-in target functions and the oracle selected by a config.

use levelset_core::bench::{drop_wave, styblinski_tang};
use levelset_core::oracle::{standard_normal, MonteCarloOracle};
use levelset_core::{DeterministicOracle, EvaluationOracle, GaussianNoiseOracle, LevelSpec, NoiseVariance, StreamKey};

use crate::config::{OracleSpec, Problem};

impl Problem {
    /// Exact value at `x`. The dimension has been checked by the caller.
    pub fn eval<const D: usize>(&self, x: &[f64; D]) -> f64 {
        match self {
            Problem::DropWave => drop_wave(&[x[0], x[1]]),
            Problem::StyblinskiTang { .. } => styblinski_tang(x),
            Problem::Sphere { center, radius } => {
                x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt() - radius
            }
            Problem::Linear { coefficients, offset } => {
                x.iter().zip(coefficients).map(|(a, c)| a * c).sum::<f64>() - offset
            }
        }
    }
}

/// The oracle described by `[oracle]` around the configured function.
#[derive(Debug, Clone)]
pub struct ConfiguredOracle<'a> {
    pub problem: &'a Problem,
    pub spec: &'a OracleSpec,
}

impl<'a> ConfiguredOracle<'a> {
    pub fn new(problem: &'a Problem, spec: &'a OracleSpec) -> Self {
        Self { problem, spec }
    }
}

impl<const D: usize> EvaluationOracle<D> for ConfiguredOracle<'_> {
    fn sample(&self, x: &[f64; D], at: &LevelSpec, key: StreamKey) -> f64 {
        let f = |y: &[f64; D]| self.problem.eval(y);
        match *self.spec {
            OracleSpec::Deterministic => DeterministicOracle(f).sample(x, at, key),
            OracleSpec::Gaussian { variance_factor, variance_power } => {
                GaussianNoiseOracle::new(f, NoiseVariance { factor: variance_factor, power: variance_power })
                    .sample(x, at, key)
            }
            OracleSpec::MonteCarlo { sample_sd } => MonteCarloOracle {
                sampler: |y: &[f64; D], rng: &mut dyn levelset_core::oracle::RngCore| {
                    f(y) + sample_sd * standard_normal(rng)
                },
                sigma: sample_sd,
            }
            .sample(x, at, key),
        }
    }

    fn noise_scale(&self) -> f64 {
        match *self.spec {
            OracleSpec::Deterministic => 0.0,
            OracleSpec::Gaussian { variance_factor, .. } => variance_factor.sqrt(),
            OracleSpec::MonteCarlo { sample_sd } => sample_sd,
        }
    }
}
