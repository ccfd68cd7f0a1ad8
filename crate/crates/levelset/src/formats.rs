//! On-disk formats.
//!
//! Every file carries the config hash and seed: as fields in JSON, as leading
//! `#` lines in CSV and OBJ. Floats are written in shortest round-trip form,
//! so reading a file back reproduces the values bit for bit. Layouts are
//! documented in `docs/formats.md`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use levelset_core::bench::SweepResult;
use levelset_core::extract::LevelSetGeometry;
use levelset_core::metrics::ErrorEstimate;
use levelset_core::refine::{LevelTally, Phase};
use levelset_core::{Cell, LevelSetEstimate, LocalApproximant, WorkLedger};
use serde::{Deserialize, Serialize};

use crate::config::CliConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "levelset-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const METRICS_HEADER: [&str; 6] = ["L", "h_L", "mean_error", "std_error", "total_work", "n_cells"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(config: &CliConfig) -> Self {
        Self { config_hash: config.hash(), seed: config.seed }
    }

    fn comment_lines(&self) -> String {
        format!("# config_hash={}\n# seed={}\n", self.config_hash, self.seed)
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::File::create(path).and_then(|mut f| f.write_all(bytes)).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub level: u32,
    pub index: Vec<u32>,
    /// Vertex samples; bit `i` of the vertex number selects the upper end of axis `i`.
    pub values: Vec<f64>,
}

impl CellRecord {
    fn of<const D: usize>(a: &LocalApproximant<D>) -> Self {
        Self { level: a.cell().level, index: a.cell().index.to_vec(), values: a.values().to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TallyRecord {
    pub level: u32,
    pub phase: String,
    pub cells_visited: u64,
    pub cells_refined: u64,
    pub evaluations: u64,
    pub cost_per_eval: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub total_cost: f64,
    pub total_evaluations: u64,
    pub levels: Vec<TallyRecord>,
}

impl LedgerRecord {
    pub fn new(provenance: Provenance, ledger: &WorkLedger) -> Self {
        Self {
            provenance,
            total_cost: ledger.total_cost,
            total_evaluations: ledger.total_evaluations(),
            levels: ledger
                .per_level
                .iter()
                .map(|t| TallyRecord {
                    level: t.level,
                    phase: match t.phase {
                        Phase::Uniform => "uniform".into(),
                        Phase::Adaptive => "adaptive".into(),
                    },
                    cells_visited: t.cells_visited,
                    cells_refined: t.cells_refined,
                    evaluations: t.evaluations,
                    cost_per_eval: t.cost_per_eval,
                    cost: t.cost(),
                })
                .collect(),
        }
    }

    pub fn to_ledger(&self) -> Result<WorkLedger> {
        let tallies = self
            .levels
            .iter()
            .map(|t| {
                let phase = match t.phase.as_str() {
                    "uniform" => Phase::Uniform,
                    "adaptive" => Phase::Adaptive,
                    other => return Err(Error::Validation(format!("level {}: unknown phase {other:?}", t.level))),
                };
                Ok(LevelTally {
                    level: t.level,
                    phase,
                    cells_visited: t.cells_visited,
                    cells_refined: t.cells_refined,
                    evaluations: t.evaluations,
                    cost_per_eval: t.cost_per_eval,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WorkLedger::from_tallies(tallies))
    }
}

/// The adapted mesh with its approximants: enough to extract geometry,
/// validate the partition, or resume the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub provenance: Provenance,
    pub dimension: usize,
    pub base_level: u32,
    pub max_level: u32,
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub base_size: f64,
    pub config: CliConfig,
    pub leaves: Vec<CellRecord>,
    /// Visited cells that were refined.
    pub history: Vec<CellRecord>,
    pub ledger: LedgerRecord,
}

impl Checkpoint {
    pub fn new<const D: usize>(config: &CliConfig, estimate: &LevelSetEstimate<D>, ledger: &WorkLedger) -> Self {
        let provenance = Provenance::of(config);
        let rc = &estimate.config;
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            provenance: provenance.clone(),
            dimension: D,
            base_level: estimate.base_level,
            max_level: estimate.max_level(),
            domain_lower: rc.domain.lower().to_vec(),
            domain_upper: rc.domain.upper().to_vec(),
            base_size: rc.base_size,
            config: config.clone(),
            leaves: estimate.leaves.iter().map(CellRecord::of).collect(),
            history: estimate.history.iter().map(CellRecord::of).collect(),
            ledger: LedgerRecord::new(provenance, ledger),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(&read_file(path)?)?;
        if cp.format != CHECKPOINT_FORMAT || cp.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "{}: not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} file",
                path.display()
            )));
        }
        Ok(cp)
    }

    /// Rebuilds the estimate, checking every record.
    pub fn to_estimate<const D: usize>(&self) -> Result<LevelSetEstimate<D>> {
        if self.dimension != D {
            return Err(Error::Validation(format!("checkpoint has dimension {}, expected {D}", self.dimension)));
        }
        let rc = self.config.run_config::<D>(self.max_level)?;
        if rc.domain.lower()[..] != self.domain_lower[..]
            || rc.domain.upper()[..] != self.domain_upper[..]
            || rc.base_size != self.base_size
        {
            return Err(Error::Validation("mesh geometry does not match the embedded config".into()));
        }
        let grid = rc.grid().map_err(levelset_core::Error::from)?;
        let cells = |what: &str, records: &[CellRecord]| -> Result<Vec<(Cell<D>, Vec<f64>)>> {
            records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let bad = |msg: String| {
                        Error::Validation(format!("{what} record {i} (level {}, index {:?}): {msg}", r.level, r.index))
                    };
                    let index: [u32; D] = r
                        .index
                        .as_slice()
                        .try_into()
                        .map_err(|_| bad(format!("index has {} entries, expected {D}", r.index.len())))?;
                    let cell = Cell::new(r.level, index);
                    if !grid.contains_cell(&cell) || r.level > self.max_level {
                        return Err(bad("cell lies outside the grid".into()));
                    }
                    if r.values.len() != 1 << D {
                        return Err(bad(format!("{} vertex values, expected {}", r.values.len(), 1 << D)));
                    }
                    if r.values.iter().any(|v| !v.is_finite()) {
                        return Err(bad("non-finite vertex value".into()));
                    }
                    Ok((cell, r.values.clone()))
                })
                .collect()
        };
        let leaves = cells("leaf", &self.leaves)?;
        let history = cells("history", &self.history)?;
        Ok(LevelSetEstimate::from_parts(rc, self.base_level, leaves, history)?)
    }
}

fn push_float(out: &mut String, v: f64) {
    write!(out, "{v}").expect("writing to a String");
}

/// One row per piece: source cell, then the piece's points.
pub fn segments_csv<const D: usize>(geom: &LevelSetGeometry<D>, provenance: &Provenance) -> String {
    let mut out = provenance.comment_lines();
    let axes = ["x", "y", "z", "w"];
    let mut header: Vec<String> = vec!["level".into()];
    header.extend((0..D).map(|i| format!("i{i}")));
    for p in 1..=D {
        header.extend(axes[..D].iter().map(|a| format!("{a}{p}")));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for piece in &geom.pieces {
        write!(out, "{}", piece.cell.level).expect("writing to a String");
        for i in piece.cell.index {
            write!(out, ",{i}").expect("writing to a String");
        }
        for q in &piece.points {
            for v in q {
                out.push(',');
                push_float(&mut out, *v);
            }
        }
        out.push('\n');
    }
    out
}

/// Parsed segments CSV: `(cell, points)` per row.
pub fn read_segments_csv<const D: usize>(text: &str) -> Result<Vec<(Cell<D>, Vec<[f64; D]>)>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let width = reader.headers()?.len();
    if width != 1 + D + D * D {
        return Err(Error::Format { format: "segments-csv".into(), dimension: D });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or_default();
        let parse_err = |i: usize| Error::Validation(format!("segments-csv: bad field {:?}", field(i)));
        let level: u32 = field(0).parse().map_err(|_| parse_err(0))?;
        let mut index = [0u32; D];
        for (k, slot) in index.iter_mut().enumerate() {
            *slot = field(1 + k).parse().map_err(|_| parse_err(1 + k))?;
        }
        let mut points = Vec::with_capacity(D);
        for p in 0..D {
            let mut q = [0.0; D];
            for (a, slot) in q.iter_mut().enumerate() {
                let i = 1 + D + p * D + a;
                *slot = field(i).parse().map_err(|_| parse_err(i))?;
            }
            points.push(q);
        }
        rows.push((Cell::new(level, index), points));
    }
    Ok(rows)
}

/// Wavefront OBJ: three unshared vertices per triangle.
pub fn obj<const D: usize>(geom: &LevelSetGeometry<D>, provenance: &Provenance) -> Result<String> {
    if D != 3 {
        return Err(Error::Format { format: "obj".into(), dimension: D });
    }
    let mut out = provenance.comment_lines();
    writeln!(out, "# triangles={}", geom.len()).expect("writing to a String");
    for piece in &geom.pieces {
        for q in &piece.points {
            out.push('v');
            for v in q {
                out.push(' ');
                push_float(&mut out, *v);
            }
            out.push('\n');
        }
    }
    for t in 0..geom.len() {
        writeln!(out, "f {} {} {}", 3 * t + 1, 3 * t + 2, 3 * t + 3).expect("writing to a String");
    }
    Ok(out)
}

/// Metrics CSV: one row per final level.
pub fn metrics_csv(sweep: &SweepResult, provenance: &Provenance) -> String {
    let mut out = provenance.comment_lines();
    writeln!(out, "# point_family={}", sweep.point_family.name()).expect("writing to a String");
    out.push_str(&METRICS_HEADER.join(","));
    out.push('\n');
    for r in &sweep.rows {
        let fields = [r.h_final, r.error_mean, r.error_std_error, r.work_total, r.leaf_cells];
        write!(out, "{}", r.max_level).expect("writing to a String");
        for v in fields {
            out.push(',');
            push_float(&mut out, v);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub function: String,
    pub dimension: usize,
    pub levels: Vec<u32>,
    pub base_levels: Vec<u32>,
    pub fitted_slope: Option<f64>,
    pub target_slope: f64,
    pub error_rate: Option<f64>,
    pub n_runs: usize,
    pub points_per_cell: usize,
    pub point_family: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub mean: f64,
    pub std_error: Option<f64>,
    pub n_runs: usize,
    pub points_per_cell: usize,
    pub point_family: String,
}

impl ErrorRecord {
    pub fn new(e: &ErrorEstimate, family: &str) -> Self {
        Self {
            mean: e.mean,
            std_error: e.std_error.is_finite().then_some(e.std_error),
            n_runs: e.n_runs,
            points_per_cell: e.points_per_cell,
            point_family: family.into(),
        }
    }
}

/// `run.json`: what ran, with which inputs, producing which files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(flatten)]
    pub provenance: Provenance,
    /// Seconds since the Unix epoch; the only field that varies between reruns.
    pub timestamp: u64,
    pub function: String,
    pub dimension: usize,
    pub base_level: Option<u32>,
    pub max_level: Option<u32>,
    pub leaf_cells: Option<usize>,
    pub total_cost: Option<f64>,
    pub error: Option<ErrorRecord>,
    pub files: Vec<String>,
    pub config: CliConfig,
}

impl RunMetadata {
    pub fn new(command: &str, config: &CliConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            provenance: Provenance::of(config),
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            function: config.problem.name().into(),
            dimension: config.dimension(),
            base_level: None,
            max_level: None,
            leaf_cells: None,
            total_cost: None,
            error: None,
            files: Vec::new(),
            config: config.clone(),
        }
    }
}
