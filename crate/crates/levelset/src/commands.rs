//! The `run`, `sweep`, `extract` and `validate` subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use levelset_core::bench::convergence_sweep;
use levelset_core::extract::{extract_levelset, LevelSetGeometry};
use levelset_core::grid::{validate_partition, PartitionError};
use levelset_core::metrics::{error_key, estimate_error, ErrorEstimate};
use levelset_core::refine::Phase;
use levelset_core::{run_adaptive, LevelSetEstimate, WorkLedger};

use crate::config::{CliConfig, GeometryFormat};
use crate::error::{Error, Result};
use crate::formats::{
    metrics_csv, obj, segments_csv, to_json_pretty, write_file, Checkpoint, ErrorRecord, LedgerRecord, Provenance,
    RunMetadata, SweepSummary,
};
use crate::problem::ConfiguredOracle;

pub const MESH_FILE: &str = "mesh.json";
pub const LEDGER_FILE: &str = "ledger.json";
pub const SEGMENTS_FILE: &str = "segments.csv";
pub const OBJ_FILE: &str = "surface.obj";
pub const RUN_FILE: &str = "run.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Runs `$f::<D>(args)` for the dimension `$d` known only at run time.
macro_rules! with_dimension {
    ($d:expr, $f:ident ( $($arg:expr),* $(,)? )) => {
        match $d {
            1 => $f::<1>($($arg),*),
            2 => $f::<2>($($arg),*),
            3 => $f::<3>($($arg),*),
            4 => $f::<4>($($arg),*),
            d => Err(Error::Dimension(d)),
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    SegmentsCsv,
    Obj,
}

impl ExportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "segments-csv" | "csv" => Ok(ExportFormat::SegmentsCsv),
            "obj" => Ok(ExportFormat::Obj),
            other => Err(Error::config("format", format!("unknown format {other:?}; use segments-csv or obj"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExportFormat::SegmentsCsv => "segments-csv",
            ExportFormat::Obj => "obj",
        }
    }

    pub fn default_file(&self) -> &'static str {
        match self {
            ExportFormat::SegmentsCsv => SEGMENTS_FILE,
            ExportFormat::Obj => OBJ_FILE,
        }
    }

    fn check(&self, dimension: usize) -> Result<()> {
        let ok = match self {
            ExportFormat::SegmentsCsv => dimension == 2 || dimension == 3,
            ExportFormat::Obj => dimension == 3,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Format { format: self.name().into(), dimension })
        }
    }
}

fn geometry_format(config: &CliConfig) -> Result<Option<ExportFormat>> {
    let d = config.dimension();
    let f = match config.output.geometry {
        GeometryFormat::None => None,
        GeometryFormat::Auto => match d {
            2 => Some(ExportFormat::SegmentsCsv),
            3 => Some(ExportFormat::Obj),
            _ => None,
        },
        GeometryFormat::SegmentsCsv => Some(ExportFormat::SegmentsCsv),
        GeometryFormat::Obj => Some(ExportFormat::Obj),
    };
    if let Some(f) = f {
        f.check(d)?;
    }
    Ok(f)
}

/// Reads, overrides and validates a config.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<CliConfig> {
    let mut config = CliConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.validate_common()?;
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Geometry file contents in `format`.
pub fn render_geometry<const D: usize>(
    geom: &LevelSetGeometry<D>,
    format: ExportFormat,
    provenance: &Provenance,
) -> Result<String> {
    format.check(D)?;
    match format {
        ExportFormat::SegmentsCsv => Ok(segments_csv(geom, provenance)),
        ExportFormat::Obj => obj(geom, provenance),
    }
}

fn note(verbose: bool, msg: impl FnOnce() -> String) {
    if verbose {
        eprintln!("{}", msg());
    }
}

/// One adaptive run: writes the checkpoint, ledger, geometry and metadata
/// into `out`.
pub fn cmd_run(config: &CliConfig, out: &Path, verbose: bool) -> Result<RunMetadata> {
    let format = geometry_format(config)?;
    with_dimension!(config.dimension(), run_dim(config, out, format, verbose))
}

fn run_dim<const D: usize>(
    config: &CliConfig,
    out: &Path,
    format: Option<ExportFormat>,
    verbose: bool,
) -> Result<RunMetadata> {
    let max_level = config.max_level::<D>()?;
    let rc = config.run_config::<D>(max_level)?;
    let oracle = ConfiguredOracle::new(&config.problem, &config.oracle);
    note(verbose, || {
        format!("running {} to L = {max_level}, base level {}", config.problem.name(), rc.base_level().unwrap_or(0))
    });
    let (estimate, ledger) = run_adaptive(&rc, &oracle)?;
    note(verbose, || format!("{} leaves, total work {:e}", estimate.leaves.len(), ledger.total_cost));
    create_dir(out)?;
    let provenance = Provenance::of(config);
    let mut meta = RunMetadata::new("run", config);
    meta.base_level = Some(estimate.base_level);
    meta.max_level = Some(max_level);
    meta.leaf_cells = Some(estimate.leaves.len());
    meta.total_cost = Some(ledger.total_cost);

    write_file(&out.join(MESH_FILE), to_json_pretty(&Checkpoint::new(config, &estimate, &ledger))?.as_bytes())?;
    meta.files.push(MESH_FILE.into());
    write_file(&out.join(LEDGER_FILE), to_json_pretty(&LedgerRecord::new(provenance.clone(), &ledger))?.as_bytes())?;
    meta.files.push(LEDGER_FILE.into());
    if let Some(format) = format {
        let geom = extract_levelset(&estimate.leaves).map_err(levelset_core::Error::from)?;
        write_file(&out.join(format.default_file()), render_geometry(&geom, format, &provenance)?.as_bytes())?;
        meta.files.push(format.default_file().into());
    }
    if config.estimate.report_error {
        let family = config.point_family();
        let n = config.estimate.points_per_cell;
        let truth = |x: &[f64; D]| config.problem.eval(x);
        let e = estimate_error(&estimate, &truth, n, error_key(rc.seed), family);
        note(verbose, || format!("sign-mismatch error {e:e}"));
        meta.error = Some(ErrorRecord::new(&ErrorEstimate::from_samples(&[e], n), family.name()));
    }
    meta.files.push(RUN_FILE.into());
    write_file(&out.join(RUN_FILE), to_json_pretty(&meta)?.as_bytes())?;
    Ok(meta)
}

/// Convergence sweep over `[sweep] levels`: writes the metrics CSV and a
/// slope summary.
pub fn cmd_sweep(config: &CliConfig, out: &Path, verbose: bool) -> Result<SweepSummary> {
    config.validate_sweep()?;
    with_dimension!(config.dimension(), sweep_dim(config, out, verbose))
}

fn sweep_dim<const D: usize>(config: &CliConfig, out: &Path, verbose: bool) -> Result<SweepSummary> {
    let levels = &config.sweep.levels;
    let rc = config.run_config::<D>(levels[0])?;
    for &l in levels {
        config.run_config::<D>(l)?;
    }
    let oracle = ConfiguredOracle::new(&config.problem, &config.oracle);
    let truth = |x: &[f64; D]| config.problem.eval(x);
    let family = config.point_family();
    note(verbose, || format!("sweeping {} over L = {levels:?}", config.problem.name()));
    let sweep = convergence_sweep(
        &rc,
        &oracle,
        &truth,
        levels,
        config.estimate.n_runs,
        config.estimate.points_per_cell,
        family,
    )?;
    for r in &sweep.rows {
        note(verbose, || {
            format!("L = {}: error {:e} ± {:e}, work {:e}", r.max_level, r.error_mean, r.error_std_error, r.work_total)
        });
    }
    create_dir(out)?;
    let provenance = Provenance::of(config);
    write_file(&out.join(METRICS_FILE), metrics_csv(&sweep, &provenance).as_bytes())?;
    let summary = SweepSummary {
        provenance,
        function: config.problem.name().into(),
        dimension: D,
        levels: levels.clone(),
        base_levels: sweep.rows.iter().map(|r| r.base_level).collect(),
        fitted_slope: sweep.fitted_slope.is_finite().then_some(sweep.fitted_slope),
        target_slope: sweep.target_slope,
        error_rate: sweep.error_rate().ok().filter(|s| s.is_finite()),
        n_runs: sweep.n_runs,
        points_per_cell: sweep.points_per_cell,
        point_family: family.name().into(),
    };
    write_file(&out.join(SUMMARY_FILE), to_json_pretty(&summary)?.as_bytes())?;
    let mut meta = RunMetadata::new("sweep", config);
    meta.files = vec![METRICS_FILE.into(), SUMMARY_FILE.into(), RUN_FILE.into()];
    write_file(&out.join(RUN_FILE), to_json_pretty(&meta)?.as_bytes())?;
    Ok(summary)
}

/// Writes the geometry of a checkpoint; returns the number of pieces.
pub fn cmd_extract(checkpoint: &Path, format: ExportFormat, out: &Path) -> Result<usize> {
    let cp = Checkpoint::load(checkpoint)?;
    format.check(cp.dimension)?;
    with_dimension!(cp.dimension, extract_dim(&cp, format, out))
}

fn extract_dim<const D: usize>(cp: &Checkpoint, format: ExportFormat, out: &Path) -> Result<usize> {
    let estimate = cp.to_estimate::<D>()?;
    let geom = extract_levelset(&estimate.leaves).map_err(levelset_core::Error::from)?;
    write_file(out, render_geometry(&geom, format, &cp.provenance)?.as_bytes())?;
    Ok(geom.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub leaf_cells: usize,
    pub history_cells: usize,
    pub total_volume: f64,
    pub domain_volume: f64,
    pub relative_discrepancy: f64,
    pub leaves_per_level: BTreeMap<u32, usize>,
}

/// Checks a checkpoint: record shape, partition of the domain, and that the
/// stored ledger matches the stored cells.
pub fn cmd_validate(checkpoint: &Path) -> Result<ValidationReport> {
    let cp = Checkpoint::load(checkpoint)?;
    with_dimension!(cp.dimension, validate_dim(&cp))
}

fn fmt_cells<const D: usize>(cells: &[levelset_core::Cell<D>]) -> String {
    let shown: Vec<String> =
        cells.iter().take(10).map(|c| format!("(level {}, index {:?})", c.level, c.index)).collect();
    let more = if cells.len() > 10 { format!(" and {} more", cells.len() - 10) } else { String::new() };
    format!("{}{more}", shown.join(", "))
}

fn validate_dim<const D: usize>(cp: &Checkpoint) -> Result<ValidationReport> {
    let estimate = cp.to_estimate::<D>()?;
    let report = validate_partition(&estimate.mesh()).map_err(|e| {
        Error::Validation(match e {
            PartitionError::OutOfRange(c) => format!("cells outside the grid: {}", fmt_cells(&c)),
            PartitionError::Overlap(pairs) => {
                let cells: Vec<_> = pairs.iter().map(|p| p.1).collect();
                format!("overlapping cells: {}", fmt_cells(&cells))
            }
            PartitionError::Gap(c) => format!("uncovered cells: {}", fmt_cells(&c)),
        })
    })?;
    check_ledger(&estimate, &cp.ledger.to_ledger()?)?;
    let mut leaves_per_level = BTreeMap::new();
    for a in &estimate.leaves {
        *leaves_per_level.entry(a.cell().level).or_insert(0) += 1;
    }
    Ok(ValidationReport {
        leaf_cells: estimate.leaves.len(),
        history_cells: estimate.history.len(),
        total_volume: report.total_volume,
        domain_volume: report.domain_volume,
        relative_discrepancy: report.relative_discrepancy,
        leaves_per_level,
    })
}

fn check_ledger<const D: usize>(estimate: &LevelSetEstimate<D>, ledger: &WorkLedger) -> Result<()> {
    if ledger.recompute_total() != ledger.total_cost {
        return Err(Error::Validation("ledger total does not match its levels".into()));
    }
    let mut visited: BTreeMap<u32, u64> = BTreeMap::new();
    for a in estimate.leaves.iter().chain(&estimate.history) {
        *visited.entry(a.cell().level).or_insert(0) += 1;
    }
    let uniform_mode = estimate.config.mode == levelset_core::RefinementMode::Uniform;
    for t in ledger.per_level.iter().filter(|t| t.phase == Phase::Adaptive) {
        let stored = visited.get(&t.level).copied().unwrap_or(0);
        let charged_only = uniform_mode && t.level < estimate.max_level();
        if !charged_only && stored != t.cells_visited {
            return Err(Error::Validation(format!(
                "level {}: ledger records {} visited cells, checkpoint stores {stored}",
                t.level, t.cells_visited
            )));
        }
    }
    Ok(())
}

/// Default output location for `extract`.
pub fn default_extract_path(checkpoint: &Path, format: ExportFormat) -> PathBuf {
    checkpoint.parent().unwrap_or_else(|| Path::new(".")).join(format.default_file())
}
