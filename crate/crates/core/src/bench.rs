//! Analytic test problems and the convergence sweep.

use alloc::vec::Vec;

use crate::grid::Domain;
use crate::metrics::{expected_error, fit_loglog_slope, PointFamily};
use crate::oracle::{EvaluationOracle, Exponent, GaussianNoiseOracle, NoiseVariance};
use crate::refine::{alpha_p, ConfigError, RunConfig};
use crate::Error;

/// `1/5 - (1 + cos(12 r)) / (r²/2 + 2)` with `r = |x|`, on `[-5, 5]²`.
pub fn drop_wave(x: &[f64; 2]) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    0.2 - (1.0 + libm::cos(12.0 * libm::sqrt(r2))) / (0.5 * r2 + 2.0)
}

/// `(1/122) Σ (x_i⁴ - 16 x_i² + 5 x_i) + 1`, on `[-5, 5]^D`.
pub fn styblinski_tang<const D: usize>(x: &[f64; D]) -> f64 {
    x.iter().map(|&v| v * v * v * v - 16.0 * v * v + 5.0 * v).sum::<f64>() / 122.0 + 1.0
}

/// Drop-wave setup: level-0 cells of width 10/64 so that `h_ℓ = 2^{-(ℓ+6)}`
/// relative to the domain width, `α = 2`, `β = 1/2`, `p = ∞`.
pub fn drop_wave_config(max_level: u32) -> RunConfig<2> {
    RunConfig {
        length_unit: 10.0,
        beta: Exponent::Finite(0.5),
        ..RunConfig::new(Domain::cube(-5.0, 5.0).expect("valid box"), 10.0 / 64.0, max_level)
    }
}

/// Drop-wave plus Gaussian noise of variance `1/M_ℓ = h_ℓ⁴`, the level of
/// averaging `M_ℓ` unit-variance samples.
pub fn drop_wave_oracle() -> GaussianNoiseOracle<fn(&[f64; 2]) -> f64> {
    GaussianNoiseOracle::new(drop_wave, NoiseVariance { factor: 1.0, power: 4.0 })
}

/// Styblinski–Tang setup: `h_ℓ = 2^{-(ℓ+2)}` relative to the domain width.
pub fn styblinski_tang_config(max_level: u32) -> RunConfig<3> {
    RunConfig {
        length_unit: 10.0,
        beta: Exponent::Finite(0.5),
        ..RunConfig::new(Domain::cube(-5.0, 5.0).expect("valid box"), 10.0 / 4.0, max_level)
    }
}

/// Styblinski–Tang plus Gaussian noise of variance `h_ℓ⁴ / 3`, the level of
/// averaging `M_ℓ` samples of variance 1/3.
pub fn styblinski_tang_oracle() -> GaussianNoiseOracle<fn(&[f64; 3]) -> f64> {
    GaussianNoiseOracle::new(styblinski_tang::<3>, NoiseVariance { factor: 1.0 / 3.0, power: 4.0 })
}

/// Smallest `L` with `h_L ≤ eps^{1/α_p}`.
pub fn level_for_tolerance<const D: usize>(eps: f64, cfg: &RunConfig<D>) -> Result<u32, ConfigError> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(ConfigError::Invalid { field: "tolerance", message: "must be positive".into() });
    }
    let target = libm::pow(eps, 1.0 / cfg.alpha_p());
    let h0 = cfg.h(0);
    if h0 <= target {
        return Ok(0);
    }
    let mut level = libm::ceil(libm::log2(h0 / target)).max(0.0) as u32;
    // Correct for rounding in the logarithm.
    while level > 0 && cfg.h(level - 1) <= target {
        level -= 1;
    }
    while cfg.h(level) > target {
        level += 1;
    }
    Ok(level)
}

/// Slope of total work against error predicted for the adaptive method:
/// `-(1/β + (d-1)/α_p)`.
pub fn target_slope(dim: usize, alpha: f64, beta: Exponent, p: Exponent) -> f64 {
    let inv_beta = match beta {
        Exponent::Finite(b) => 1.0 / b,
        Exponent::Infinite => 0.0,
    };
    -(inv_beta + (dim as f64 - 1.0) / alpha_p(alpha, p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub max_level: u32,
    pub base_level: u32,
    /// Schedule cell size at the final level.
    pub h_final: f64,
    pub error_mean: f64,
    pub error_std_error: f64,
    /// Mean total work over runs.
    pub work_total: f64,
    /// Mean number of leaves over runs.
    pub leaf_cells: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Sorted by final level.
    pub rows: Vec<SweepRow>,
    /// Log-log slope of work against mean error.
    pub fitted_slope: f64,
    pub target_slope: f64,
    pub n_runs: usize,
    pub points_per_cell: usize,
    pub point_family: PointFamily,
}

impl SweepResult {
    /// Log-log slope of mean error against `h_L`.
    pub fn error_rate(&self) -> Result<f64, Error> {
        let pairs: Vec<(f64, f64)> = self.rows.iter().map(|r| (r.h_final, r.error_mean)).collect();
        Ok(fit_loglog_slope(&pairs)?.0)
    }
}

/// Runs `expected_error` for each final level in `levels` and fits work
/// against error.
pub fn convergence_sweep<const D: usize, O, F>(
    cfg: &RunConfig<D>,
    oracle: &O,
    truth: &F,
    levels: &[u32],
    n_runs: usize,
    n_points: usize,
    family: PointFamily,
) -> Result<SweepResult, Error>
where
    O: EvaluationOracle<D> + ?Sized,
    F: Fn(&[f64; D]) -> f64 + Sync + ?Sized,
{
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ConfigError::Invalid {
            field: "levels",
            message: "must be nonempty and strictly ascending".into(),
        }
        .into());
    }
    if n_runs == 0 || n_points == 0 {
        return Err(ConfigError::Invalid {
            field: "n_runs",
            message: "runs and points per cell must be positive".into(),
        }
        .into());
    }
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let run_cfg = cfg.with_max_level(level);
        let base_level = run_cfg.base_level()?;
        let e = expected_error(&run_cfg, oracle, truth, n_runs, n_points, family)?;
        let n = e.runs.len() as f64;
        rows.push(SweepRow {
            max_level: level,
            base_level,
            h_final: run_cfg.h(level),
            error_mean: e.estimate.mean,
            error_std_error: e.estimate.std_error,
            work_total: e.runs.iter().map(|r| r.total_cost).sum::<f64>() / n,
            leaf_cells: e.runs.iter().map(|r| r.leaf_cells as f64).sum::<f64>() / n,
        });
    }
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.error_mean, r.work_total)).collect();
    let fitted_slope = if rows.len() >= 2 { fit_loglog_slope(&pairs)?.0 } else { f64::NAN };
    Ok(SweepResult {
        rows,
        fitted_slope,
        target_slope: target_slope(D, cfg.alpha, cfg.beta, cfg.p),
        n_runs,
        points_per_cell: n_points,
        point_family: family,
    })
}
