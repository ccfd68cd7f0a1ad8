//! Adaptive level-set estimation from noisy, cost-accounted evaluations.
//!
//! Given an oracle that returns noisy samples of `f` whose accuracy and cost
//! grow with a level index, [`refine::run_adaptive`] builds a dyadic mesh
//! refined only near the zero level set `{f = 0}` and a piecewise
//! multilinear approximant whose sign approximates the region `{f ≤ 0}`.
//!
//! The crate is `no_std` with `alloc`. The `std` feature (default) only
//! forwards to dependencies; `parallel` evaluates cells of a level with rayon
//! without changing any result.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod approx;
pub mod bench;
pub mod extract;
pub mod grid;
pub mod metrics;
pub mod oracle;
pub mod refine;
pub mod rng;

use alloc::vec::Vec;

pub use approx::{fit_local, ApproxError, DecisionVariable, LocalApproximant};
pub use grid::{AdaptiveMesh, Cell, CellBox, Domain, Grid, GridError};
pub use oracle::{
    CostSchedule, DeterministicOracle, EvaluationOracle, Exponent, GaussianNoiseOracle, LevelSpec, MonteCarloOracle,
    NoiseVariance, OracleError,
};
pub use refine::{
    resume, run_adaptive, ConfigError, LevelSetEstimate, RefinementMode, RunConfig, RunError, WorkLedger,
};
pub use rng::StreamKey;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Extract(#[from] extract::ExtractError),
    #[error("cell at level {level} with index {index:?} lies outside the grid")]
    CellOutOfRange { level: u32, index: Vec<u32> },
}

impl From<RunError> for Error {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(e) => Error::Config(e),
            RunError::Oracle(e) => Error::Oracle(e),
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
