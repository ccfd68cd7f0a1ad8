//! The adaptive level sweep, its thresholds, and the work ledger.
//!
//! Starting from the base tessellation, the mesh is refined uniformly up to
//! the base level `ℓ₀`. From there, each level `ℓ < L` visits only the cells
//! of size `h_ℓ`: it samples the `2^D` vertices at level `ℓ`, fits the local
//! approximant, and refines the cell iff `δ̂ ≤ a_ℓ`. Cells that reach level
//! `L` are sampled and fitted there. Unrefined cells keep the approximant
//! from the level at which they were visited.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::approx::{fit_local, LocalApproximant, VertexValues};
use crate::grid::{AdaptiveMesh, Cell, Domain, Grid, GridError};
use crate::oracle::{evaluate, CostSchedule, EvaluationOracle, Exponent, LevelSpec, OracleError};
use crate::rng::{tag, StreamKey};

/// Slack for `⌈·⌉` so that exact integers computed with rounding error
/// (e.g. `6 · (1 - 1/1.5)`) are not pushed up by one.
const CEIL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("level {level} outside the adaptive range [{base_level}, {max_level})")]
    LevelOutOfRange { level: u32, base_level: u32, max_level: u32 },
}

impl ConfigError {
    fn invalid(field: &'static str, message: impl ToString) -> Self {
        Self::Invalid { field, message: message.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl From<GridError> for RunError {
    fn from(e: GridError) -> Self {
        RunError::Config(ConfigError::Grid(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinementMode {
    /// Refine iff `δ̂ ≤ a_ℓ`.
    Adaptive,
    /// `a_ℓ = +∞`: every cell is refined down to level `L`.
    Uniform,
}

/// Parameters of one adaptive run.
///
/// Geometry (`domain`, `base_size`) is in domain units. The schedule cell
/// size that enters `M_ℓ`, `δ̂` and `a_ℓ` is `h_ℓ = base_size · 2^{-ℓ} /
/// length_unit`, which lets a problem posed on e.g. `[-5, 5]^d` use a
/// schedule stated for the unit cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig<const D: usize> {
    pub domain: Domain<D>,
    pub base_size: f64,
    pub length_unit: f64,
    pub alpha: f64,
    pub beta: Exponent,
    pub p: Exponent,
    /// Refinement strictness `R`; `None` selects `(1 + α_p) / 2`.
    pub r: Option<f64>,
    pub c: f64,
    pub max_level: u32,
    pub m0: f64,
    pub seed: u64,
    /// Optional `h_{ℓ₀}` (schedule units) replacing the default base level.
    pub base_size_override: Option<f64>,
    pub mode: RefinementMode,
}

impl<const D: usize> RunConfig<D> {
    /// Defaults: `α = 2`, `β = p = ∞`, `R = (1 + α_p)/2`, `c = 1`, `M0 = 1`.
    pub fn new(domain: Domain<D>, base_size: f64, max_level: u32) -> Self {
        Self {
            domain,
            base_size,
            length_unit: 1.0,
            alpha: 2.0,
            beta: Exponent::Infinite,
            p: Exponent::Infinite,
            r: None,
            c: 1.0,
            max_level,
            m0: 1.0,
            seed: 0,
            base_size_override: None,
            mode: RefinementMode::Adaptive,
        }
    }

    /// `α_p = α · p / (p + 1)`, or `α` when `p = ∞`.
    pub fn alpha_p(&self) -> f64 {
        alpha_p(self.alpha, self.p)
    }

    pub fn strictness(&self) -> f64 {
        self.r.unwrap_or_else(|| 0.5 * (1.0 + self.alpha_p()))
    }

    /// Schedule cell size `h_ℓ`.
    pub fn h(&self, level: u32) -> f64 {
        libm::ldexp(self.base_size / self.length_unit, -(level as i32))
    }

    pub fn grid(&self) -> Result<Grid<D>, GridError> {
        Grid::new(self.domain, self.base_size)
    }

    pub fn cost_schedule(&self) -> CostSchedule {
        CostSchedule { m0: self.m0, alpha: self.alpha, beta: self.beta }
    }

    pub fn level_spec(&self, level: u32) -> LevelSpec {
        let h = self.h(level);
        LevelSpec { level, h, cost: self.cost_schedule().cost_per_eval(h) }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.alpha) {
            return Err(ConfigError::invalid("alpha", "must be positive and finite"));
        }
        match self.p {
            Exponent::Finite(p) if !(p.is_finite() && p >= 1.0) => {
                return Err(ConfigError::invalid("p", "must be at least 1 (or infinite)"));
            }
            _ => {}
        }
        let bound = match self.p {
            Exponent::Finite(p) => (p + 1.0) / p,
            Exponent::Infinite => 1.0,
        };
        if self.alpha <= bound {
            return Err(ConfigError::invalid(
                "alpha",
                alloc::format!("must exceed (p+1)/p = {bound}, got {}", self.alpha),
            ));
        }
        if let Exponent::Finite(b) = self.beta {
            if !finite_pos(b) {
                return Err(ConfigError::invalid("beta", "must be positive (or infinite)"));
            }
        }
        let ap = self.alpha_p();
        let r = self.strictness();
        if !(r > 1.0 && r < ap) {
            return Err(ConfigError::invalid("R", alloc::format!("must satisfy 1 < R < alpha_p = {ap}, got {r}")));
        }
        if !finite_pos(self.c) {
            return Err(ConfigError::invalid("c", "must be positive and finite"));
        }
        if !finite_pos(self.m0) {
            return Err(ConfigError::invalid("M0", "must be positive and finite"));
        }
        if !finite_pos(self.length_unit) {
            return Err(ConfigError::invalid("length_unit", "must be positive and finite"));
        }
        if let Some(h) = self.base_size_override {
            if !finite_pos(h) {
                return Err(ConfigError::invalid("base_size_override", "must be positive and finite"));
            }
        }
        let grid = self.grid()?;
        grid.check_level(self.max_level)?;
        Ok(())
    }

    /// `ℓ₀` for this configuration.
    pub fn base_level(&self) -> Result<u32, ConfigError> {
        if let Some(target) = self.base_size_override {
            let level = (0..=self.max_level).find(|&l| self.h(l) <= target).unwrap_or(self.max_level);
            return Ok(level);
        }
        base_level(self.max_level, self.p, self.strictness(), self.alpha)
    }

    /// `a_ℓ` for `ℓ₀ ≤ level < L`; `+∞` in uniform mode.
    pub fn threshold(&self, level: u32, base_level: u32) -> Result<f64, ConfigError> {
        let a = refinement_threshold(level, self, base_level)?;
        Ok(match self.mode {
            RefinementMode::Adaptive => a,
            RefinementMode::Uniform => f64::INFINITY,
        })
    }

    /// Same run with a different final level.
    pub fn with_max_level(&self, max_level: u32) -> Self {
        Self { max_level, ..*self }
    }
}

pub fn alpha_p(alpha: f64, p: Exponent) -> f64 {
    match p {
        Exponent::Finite(p) => alpha * p / (p + 1.0),
        Exponent::Infinite => alpha,
    }
}

/// `ℓ₀ = ⌈L (1 - p / (R (p + 1)))⌉`, with `p/(p+1) → 1` for `p = ∞`.
pub fn base_level(max_level: u32, p: Exponent, r: f64, alpha: f64) -> Result<u32, ConfigError> {
    let ap = alpha_p(alpha, p);
    if !(r > 1.0 && r < ap) {
        return Err(ConfigError::invalid("R", alloc::format!("must satisfy 1 < R < alpha_p = {ap}, got {r}")));
    }
    let frac = match p {
        Exponent::Finite(p) => p / (p + 1.0),
        Exponent::Infinite => 1.0,
    };
    let x = max_level as f64 * (1.0 - frac / r);
    let level = libm::ceil(x - CEIL_SLACK * x.abs().max(1.0)).max(0.0) as u32;
    Ok(level.min(max_level))
}

/// `a_ℓ = c · h_ℓ^{α_p/R} · h_L^{α_p(R-1)/R} · h_{ℓ₀}^{-α_p/R} · h_ℓ^{-α}`.
pub fn refinement_threshold<const D: usize>(
    level: u32,
    cfg: &RunConfig<D>,
    base_level: u32,
) -> Result<f64, ConfigError> {
    if level < base_level || level >= cfg.max_level {
        return Err(ConfigError::LevelOutOfRange { level, base_level, max_level: cfg.max_level });
    }
    let ap = cfg.alpha_p();
    let r = cfg.strictness();
    let h = cfg.h(level);
    Ok(cfg.c
        * libm::pow(h, ap / r)
        * libm::pow(cfg.h(cfg.max_level), ap * (r - 1.0) / r)
        * libm::pow(cfg.h(base_level), -ap / r)
        * libm::pow(h, -cfg.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    /// Levels below `ℓ₀`: charged, values discarded.
    Uniform,
    /// Levels `ℓ₀ ..= L`: sampled, fitted, tested.
    Adaptive,
}

/// Integer tallies for one level; cost is derived, never accumulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelTally {
    pub level: u32,
    pub phase: Phase,
    pub cells_visited: u64,
    pub cells_refined: u64,
    pub evaluations: u64,
    pub cost_per_eval: f64,
}

impl LevelTally {
    pub fn cost(&self) -> f64 {
        self.evaluations as f64 * self.cost_per_eval
    }
}

/// Exact accounting of the work recursion: `Σ N · M_ℓ` over visited cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorkLedger {
    /// Sorted by level.
    pub per_level: Vec<LevelTally>,
    pub total_cost: f64,
}

impl WorkLedger {
    pub fn from_tallies(mut per_level: Vec<LevelTally>) -> Self {
        per_level.sort_by_key(|t| (t.level, t.phase));
        let mut ledger = Self { per_level, total_cost: 0.0 };
        ledger.total_cost = ledger.recompute_total();
        ledger
    }

    /// Sum of per-level costs in ascending level order.
    pub fn recompute_total(&self) -> f64 {
        self.per_level.iter().map(LevelTally::cost).sum()
    }

    pub fn total_evaluations(&self) -> u64 {
        self.per_level.iter().map(|t| t.evaluations).sum()
    }

    pub fn tally(&self, level: u32) -> Option<&LevelTally> {
        self.per_level.iter().find(|t| t.level == level)
    }

    /// Adds another (partial) ledger level by level. Integer counts make the
    /// result independent of merge order.
    pub fn merge(&mut self, other: &WorkLedger) {
        let mut tallies = core::mem::take(&mut self.per_level);
        for t in &other.per_level {
            match tallies.iter_mut().find(|s| s.level == t.level && s.phase == t.phase) {
                Some(s) => {
                    s.cells_visited += t.cells_visited;
                    s.cells_refined += t.cells_refined;
                    s.evaluations += t.evaluations;
                }
                None => tallies.push(*t),
            }
        }
        *self = Self::from_tallies(tallies);
    }
}

/// The adapted mesh with one approximant per leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetEstimate<const D: usize> {
    pub config: RunConfig<D>,
    pub base_level: u32,
    /// Leaf approximants, sorted by cell.
    pub leaves: Vec<LocalApproximant<D>>,
    /// Approximants of visited cells that were refined, sorted by cell.
    /// Kept so a resumed run can reuse their samples.
    pub history: Vec<LocalApproximant<D>>,
}

impl<const D: usize> LevelSetEstimate<D> {
    pub fn grid(&self) -> Grid<D> {
        // Validated at construction.
        self.config.grid().expect("estimate carries a validated grid")
    }

    pub fn max_level(&self) -> u32 {
        self.config.max_level
    }

    pub fn mesh(&self) -> AdaptiveMesh<D> {
        AdaptiveMesh { grid: self.grid(), cells: self.leaves.iter().map(|a| *a.cell()).collect() }
    }

    /// Rebuilds an estimate from stored `(cell, vertex values)` records.
    pub fn from_parts(
        config: RunConfig<D>,
        base_level: u32,
        leaves: impl IntoIterator<Item = (Cell<D>, Vec<f64>)>,
        history: impl IntoIterator<Item = (Cell<D>, Vec<f64>)>,
    ) -> Result<Self, crate::Error> {
        config.validate()?;
        let grid = config.grid()?;
        let build =
            |items: &mut dyn Iterator<Item = (Cell<D>, Vec<f64>)>| -> Result<Vec<LocalApproximant<D>>, crate::Error> {
                let mut out = Vec::new();
                for (cell, values) in items {
                    if !grid.contains_cell(&cell) {
                        return Err(crate::Error::CellOutOfRange { level: cell.level, index: cell.index.to_vec() });
                    }
                    out.push(fit_local(&grid, cell, &values)?);
                }
                out.sort_by(|a, b| a.cell().cmp(b.cell()));
                Ok(out)
            };
        let leaves = build(&mut leaves.into_iter())?;
        let history = build(&mut history.into_iter())?;
        Ok(Self { config, base_level, leaves, history })
    }
}

/// Where the samples of a resumed run came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResumeReport {
    /// Work already paid for by the earlier segment.
    pub reused: WorkLedger,
    /// Work newly charged by this segment.
    pub fresh: WorkLedger,
}

struct Visit<const D: usize> {
    approx: LocalApproximant<D>,
    refine: bool,
    cached: bool,
}

type SampleCache<const D: usize> = BTreeMap<Cell<D>, VertexValues>;

struct PriorRun<const D: usize> {
    cache: SampleCache<D>,
    /// Every cell at levels below this was charged by the earlier run.
    full_levels: u32,
}

/// Key for vertex `vertex` of `cell`, sampled at the cell's own level.
pub fn vertex_key<const D: usize>(seed: u64, cell: &Cell<D>, vertex: usize) -> StreamKey {
    StreamKey::root(seed)
        .derive(tag::ORACLE)
        .derive(cell.level as u64)
        .derive_all(cell.index.iter().map(|&i| i as u64))
        .derive(vertex as u64)
}

fn visit_cell<const D: usize, O: EvaluationOracle<D> + ?Sized>(
    cfg: &RunConfig<D>,
    grid: &Grid<D>,
    oracle: &O,
    spec: &LevelSpec,
    threshold: Option<f64>,
    prior: Option<&PriorRun<D>>,
    cell: &Cell<D>,
) -> Result<Visit<D>, RunError> {
    let cached = prior.and_then(|p| p.cache.get(cell));
    let values: VertexValues = match cached {
        Some(v) => v.clone(),
        None => {
            let bbox = grid.cell_box(cell);
            let mut out = VertexValues::new();
            for k in 0..1usize << D {
                let x = bbox.vertex(k);
                out.push(evaluate(oracle, grid.domain(), &x, spec, vertex_key(cfg.seed, cell, k))?.value);
            }
            out
        }
    };
    let approx = fit_local(grid, *cell, &values).expect("vertex count matches dimension");
    let refine = match threshold {
        Some(a) => approx.decision_variable(spec.h, cfg.alpha).value <= a,
        None => false,
    };
    Ok(Visit { approx, refine, cached: cached.is_some() })
}

#[cfg(feature = "parallel")]
fn visit_all<const D: usize>(
    frontier: &[Cell<D>],
    f: impl Fn(&Cell<D>) -> Result<Visit<D>, RunError> + Sync + Send,
) -> Result<Vec<Visit<D>>, RunError> {
    use rayon::prelude::*;
    frontier.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn visit_all<const D: usize>(
    frontier: &[Cell<D>],
    f: impl Fn(&Cell<D>) -> Result<Visit<D>, RunError>,
) -> Result<Vec<Visit<D>>, RunError> {
    frontier.iter().map(f).collect()
}

fn sweep<const D: usize, O: EvaluationOracle<D> + ?Sized>(
    cfg: &RunConfig<D>,
    oracle: &O,
    prior: Option<&PriorRun<D>>,
) -> Result<(LevelSetEstimate<D>, WorkLedger, ResumeReport), RunError> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let base = cfg.base_level()?;
    let n_vertices = 1u64 << D;
    let max_level = cfg.max_level;

    let mut tallies = Vec::new();
    let mut reused = Vec::new();
    let mut fresh = Vec::new();
    let cached_at =
        |level: u32| -> u64 { prior.map_or(0, |p| p.cache.keys().filter(|c| c.level == level).count() as u64) };
    let mut split = |t: LevelTally, reused_cells: u64| {
        let mk =
            |cells: u64| LevelTally { cells_visited: cells, cells_refined: 0, evaluations: cells * n_vertices, ..t };
        reused.push(mk(reused_cells));
        fresh.push(mk(t.cells_visited - reused_cells));
        tallies.push(t);
    };
    let charged_only = |level: u32, cells: u64, prior: Option<&PriorRun<D>>| -> u64 {
        match prior {
            Some(p) if level < p.full_levels => cells,
            Some(_) => cached_at(level).min(cells),
            None => 0,
        }
    };

    for level in 0..base {
        let cells = grid.uniform_count(level);
        let t = LevelTally {
            level,
            phase: Phase::Uniform,
            cells_visited: cells,
            cells_refined: cells,
            evaluations: cells * n_vertices,
            cost_per_eval: cfg.level_spec(level).cost,
        };
        split(t, charged_only(level, cells, prior));
    }

    let mut frontier = grid.uniform_cells(base);
    let mut leaves = Vec::new();
    let mut history = Vec::new();
    for level in base..=max_level {
        let spec = cfg.level_spec(level);
        let threshold = if level < max_level { Some(cfg.threshold(level, base)?) } else { None };
        let mut next = Vec::new();
        let visited = frontier.len() as u64;

        if cfg.mode == RefinementMode::Uniform && level < max_level {
            // Every cell refines regardless of its samples; charge without sampling.
            for cell in &frontier {
                next.extend(cell.children());
            }
            let t = LevelTally {
                level,
                phase: Phase::Adaptive,
                cells_visited: visited,
                cells_refined: visited,
                evaluations: visited * n_vertices,
                cost_per_eval: spec.cost,
            };
            split(t, charged_only(level, visited, prior));
        } else {
            let visits = visit_all(&frontier, |cell| visit_cell(cfg, &grid, oracle, &spec, threshold, prior, cell))?;
            let mut refined = 0u64;
            let mut hits = 0u64;
            for v in visits {
                hits += v.cached as u64;
                if v.refine {
                    refined += 1;
                    next.extend(v.approx.cell().children());
                    history.push(v.approx);
                } else {
                    leaves.push(v.approx);
                }
            }
            let t = LevelTally {
                level,
                phase: Phase::Adaptive,
                cells_visited: visited,
                cells_refined: refined,
                evaluations: visited * n_vertices,
                cost_per_eval: spec.cost,
            };
            split(t, hits);
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }

    leaves.sort_by(|a, b| a.cell().cmp(b.cell()));
    history.sort_by(|a, b| a.cell().cmp(b.cell()));
    let estimate = LevelSetEstimate { config: *cfg, base_level: base, leaves, history };
    let report = ResumeReport { reused: WorkLedger::from_tallies(reused), fresh: WorkLedger::from_tallies(fresh) };
    Ok((estimate, WorkLedger::from_tallies(tallies), report))
}

/// Runs the full adaptive sweep from the base tessellation to level `L`.
pub fn run_adaptive<const D: usize, O: EvaluationOracle<D> + ?Sized>(
    cfg: &RunConfig<D>,
    oracle: &O,
) -> Result<(LevelSetEstimate<D>, WorkLedger), RunError> {
    let (estimate, ledger, _) = sweep(cfg, oracle, None)?;
    Ok((estimate, ledger))
}

/// Continues an earlier run to a deeper final level.
///
/// The thresholds `a_ℓ` and the base level depend on `L`, so the sweep is
/// replayed from the base level under the new `L`. Every cell the earlier
/// run already sampled is served from its stored approximants instead of
/// the oracle; because samples are keyed, the result is bit-for-bit the same
/// as a fresh run to `new_max_level`.
pub fn resume<const D: usize, O: EvaluationOracle<D> + ?Sized>(
    estimate: &LevelSetEstimate<D>,
    ledger: &WorkLedger,
    new_max_level: u32,
    cfg: &RunConfig<D>,
    oracle: &O,
) -> Result<(LevelSetEstimate<D>, WorkLedger, ResumeReport), RunError> {
    let old = &estimate.config;
    if cfg.with_max_level(old.max_level) != *old {
        return Err(ConfigError::invalid("config", "resume requires the original configuration apart from L").into());
    }
    if new_max_level < old.max_level {
        return Err(ConfigError::invalid(
            "L",
            alloc::format!("cannot resume from L = {} to a shallower L = {new_max_level}", old.max_level),
        )
        .into());
    }
    if new_max_level == old.max_level {
        let report = ResumeReport { reused: ledger.clone(), fresh: WorkLedger::default() };
        return Ok((estimate.clone(), ledger.clone(), report));
    }
    let cache: SampleCache<D> = estimate
        .leaves
        .iter()
        .chain(&estimate.history)
        .map(|a| (*a.cell(), a.values().iter().copied().collect()))
        .collect();
    let full_levels = match old.mode {
        RefinementMode::Adaptive => estimate.base_level,
        RefinementMode::Uniform => old.max_level,
    };
    let prior = PriorRun { cache, full_levels };
    sweep(&cfg.with_max_level(new_max_level), oracle, Some(&prior))
}
