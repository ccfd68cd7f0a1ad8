//! Sign-mismatch error of an estimate against a known truth.
//!
//! The error of a run is the volume of the region where `f ≤ 0` and
//! `f̂ ≤ 0` disagree. It is estimated cell by cell with the same number of
//! randomized points in every leaf, so the global estimate is exactly the sum
//! of the per-cell ones.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_core::RngCore;
use thiserror::Error;

use crate::approx::LocalApproximant;
use crate::grid::{AdaptiveMesh, Cell, CellBox};
use crate::oracle::EvaluationOracle;
use crate::refine::{run_adaptive, LevelSetEstimate, RunConfig, RunError};
use crate::rng::{run_seed, tag, StreamKey};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("leaf cell at level {level} with index {index:?} has no approximant")]
    MissingApproximant { level: u32, index: Vec<u32> },
    #[error("at least {needed} inputs required, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("entry {index} is not strictly positive and finite: ({x}, {y})")]
    NonPositive { index: usize, x: f64, y: f64 },
}

/// How error points are placed inside a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFamily {
    /// Owen-scrambled Sobol points (at most 65536 per cell, 256 dimensions).
    ScrambledSobol,
    /// Latin-hypercube points: one per stratum along every axis.
    Stratified,
}

impl PointFamily {
    pub fn preferred(dim: usize, n: usize) -> Self {
        if dim <= sobol_burley::NUM_DIMENSIONS as usize && n <= 1 << 16 {
            PointFamily::ScrambledSobol
        } else {
            PointFamily::Stratified
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PointFamily::ScrambledSobol => "scrambled-sobol",
            PointFamily::Stratified => "stratified-random",
        }
    }
}

/// `n` points in local coordinates `[0, 1)^D`, deterministic given `key`.
pub fn unit_points<const D: usize>(n: usize, key: StreamKey, family: PointFamily) -> Vec<[f64; D]> {
    match family {
        PointFamily::ScrambledSobol => {
            let seed = key.seed_u32();
            (0..n as u32).map(|i| sobol_point::<D>(i, seed)).collect()
        }
        PointFamily::Stratified => {
            let mut rng = key.rng();
            let mut pts = alloc::vec![[0.0; D]; n];
            let mut strata: Vec<usize> = (0..n).collect();
            for axis in 0..D {
                strata.shuffle(&mut rng);
                for (p, &s) in pts.iter_mut().zip(&strata) {
                    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                    p[axis] = (s as f64 + u) / n as f64;
                }
            }
            pts
        }
    }
}

fn sobol_point<const D: usize>(i: u32, seed: u32) -> [f64; D] {
    if D <= 4 {
        let p = sobol_burley::sample_4d(i, 0, seed);
        core::array::from_fn(|axis| p[axis] as f64)
    } else {
        core::array::from_fn(|axis| sobol_burley::sample(i, axis as u32, seed) as f64)
    }
}

/// `n` points inside `bbox`.
pub fn generate_cell_points<const D: usize>(
    bbox: &CellBox<D>,
    n: usize,
    key: StreamKey,
    family: PointFamily,
) -> Vec<[f64; D]> {
    unit_points::<D>(n, key, family)
        .into_iter()
        .map(|t| core::array::from_fn(|i| bbox.origin[i] + t[i] * bbox.size))
        .collect()
}

fn cell_key<const D: usize>(key: StreamKey, cell: &Cell<D>) -> StreamKey {
    key.derive(cell.level as u64).derive_all(cell.index.iter().map(|&i| i as u64))
}

/// Volume of `{f ≤ 0} Δ {f̂ ≤ 0}` inside one cell, estimated with `n` points.
pub fn cell_mismatch<const D: usize, F>(
    approx: &LocalApproximant<D>,
    truth: &F,
    n: usize,
    key: StreamKey,
    family: PointFamily,
) -> f64
where
    F: Fn(&[f64; D]) -> f64 + ?Sized,
{
    let bbox = approx.cell_box();
    let mut misses = 0usize;
    for t in unit_points::<D>(n, cell_key(key, approx.cell()), family) {
        let x: [f64; D] = core::array::from_fn(|i| bbox.origin[i] + t[i] * bbox.size);
        if (truth(&x) <= 0.0) != (approx.eval_local(&t) <= 0.0) {
            misses += 1;
        }
    }
    bbox.volume() * misses as f64 / n as f64
}

/// Per-leaf mismatch volumes, in leaf order.
pub fn cell_mismatches<const D: usize, F>(
    leaves: &[LocalApproximant<D>],
    truth: &F,
    n: usize,
    key: StreamKey,
    family: PointFamily,
) -> Vec<f64>
where
    F: Fn(&[f64; D]) -> f64 + Sync + ?Sized,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        leaves.par_iter().map(|a| cell_mismatch(a, truth, n, key, family)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        leaves.iter().map(|a| cell_mismatch(a, truth, n, key, family)).collect()
    }
}

/// Mismatch volume over a mesh whose leaves are looked up in `approximants`
/// (sorted by cell).
pub fn sign_mismatch_error<const D: usize, F>(
    mesh: &AdaptiveMesh<D>,
    approximants: &[LocalApproximant<D>],
    truth: &F,
    n_points: usize,
    key: StreamKey,
    family: PointFamily,
) -> Result<f64, MetricsError>
where
    F: Fn(&[f64; D]) -> f64 + Sync + ?Sized,
{
    let mut leaves = Vec::with_capacity(mesh.cells.len());
    for cell in &mesh.cells {
        match approximants.binary_search_by(|a| a.cell().cmp(cell)) {
            Ok(i) => leaves.push(approximants[i].clone()),
            Err(_) => return Err(MetricsError::MissingApproximant { level: cell.level, index: cell.index.to_vec() }),
        }
    }
    Ok(cell_mismatches(&leaves, truth, n_points, key, family).iter().sum())
}

/// Mismatch volume of an estimate's leaves.
pub fn estimate_error<const D: usize, F>(
    estimate: &LevelSetEstimate<D>,
    truth: &F,
    n_points: usize,
    key: StreamKey,
    family: PointFamily,
) -> f64
where
    F: Fn(&[f64; D]) -> f64 + Sync + ?Sized,
{
    cell_mismatches(&estimate.leaves, truth, n_points, key, family).iter().sum()
}

/// Key for the error points of a run with the given seed.
pub fn error_key(seed: u64) -> StreamKey {
    StreamKey::root(seed).derive(tag::ERROR_POINTS)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n_runs)`; infinite for one run.
    pub std_error: f64,
    pub n_runs: usize,
    pub points_per_cell: usize,
}

impl ErrorEstimate {
    pub fn from_samples(samples: &[f64], points_per_cell: usize) -> Self {
        let (mean, std_error) = mean_and_std_error(samples);
        Self { mean, std_error, n_runs: samples.len(), points_per_cell }
    }
}

/// Mean and standard error of the mean.
pub fn mean_and_std_error(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::INFINITY);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, libm::sqrt(var / n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub error: f64,
    pub total_cost: f64,
    pub leaf_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedError {
    pub estimate: ErrorEstimate,
    pub runs: Vec<RunSummary>,
}

/// Runs the algorithm `n_runs` times with independent seeds derived from
/// `cfg.seed` and averages the mismatch error.
pub fn expected_error<const D: usize, O, F>(
    cfg: &RunConfig<D>,
    oracle: &O,
    truth: &F,
    n_runs: usize,
    n_points: usize,
    family: PointFamily,
) -> Result<ExpectedError, RunError>
where
    O: EvaluationOracle<D> + ?Sized,
    F: Fn(&[f64; D]) -> f64 + Sync + ?Sized,
{
    let one = |r: usize| -> Result<RunSummary, RunError> {
        let seed = run_seed(cfg.seed, r as u64);
        let run_cfg = RunConfig { seed, ..*cfg };
        let (est, ledger) = run_adaptive(&run_cfg, oracle)?;
        Ok(RunSummary {
            seed,
            error: estimate_error(&est, truth, n_points, error_key(seed), family),
            total_cost: ledger.total_cost,
            leaf_cells: est.leaves.len(),
        })
    };
    #[cfg(feature = "parallel")]
    let runs: Result<Vec<_>, _> = {
        use rayon::prelude::*;
        (0..n_runs).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Result<Vec<_>, _> = (0..n_runs).map(one).collect();
    let runs = runs?;
    let errors: Vec<f64> = runs.iter().map(|r| r.error).collect();
    Ok(ExpectedError { estimate: ErrorEstimate::from_samples(&errors, n_points), runs })
}

/// Least-squares line through `(ln x, ln y)`; returns `(slope, intercept)`.
pub fn fit_loglog_slope(pairs: &[(f64, f64)]) -> Result<(f64, f64), MetricsError> {
    if pairs.len() < 2 {
        return Err(MetricsError::TooFew { needed: 2, got: pairs.len() });
    }
    for (index, &(x, y)) in pairs.iter().enumerate() {
        if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(MetricsError::NonPositive { index, x, y });
        }
    }
    let n = pairs.len() as f64;
    let lx: Vec<f64> = pairs.iter().map(|p| libm::log(p.0)).collect();
    let ly: Vec<f64> = pairs.iter().map(|p| libm::log(p.1)).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(MetricsError::TooFew { needed: 2, got: 1 });
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}
