//! Dyadic box-cell geometry.
//!
//! Cells are identified by `(level, integer multi-index)` relative to a base
//! tessellation of a rectangular [`Domain`] into cubes of side `base_size`.
//! All partition checks run in index space, so they are exact.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::cmp::Ordering;

use smallvec::SmallVec;
use thiserror::Error;

/// Relative tolerance used when checking that a domain extent is an integer
/// multiple of the base cell size.
const DIVISIBILITY_TOL: f64 = 1e-9;

/// Largest supported `base_count * 2^level` along one axis.
const MAX_AXIS_CELLS: u64 = 1 << 31;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("domain axis {axis}: upper bound {upper} must exceed lower bound {lower}")]
    EmptyAxis { axis: usize, lower: f64, upper: f64 },
    #[error("domain axis {axis}: bounds must be finite")]
    NonFinite { axis: usize },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("base cell size must be positive and finite, got {0}")]
    BadBaseSize(f64),
    #[error("domain axis {axis}: extent {extent} is not an integer multiple of base size {base_size}")]
    NotDivisible { axis: usize, extent: f64, base_size: f64 },
    #[error("level {level} would need more than 2^31 cells along axis {axis}")]
    LevelTooDeep { axis: usize, level: u32 },
}

/// An axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain<const D: usize> {
    lower: [f64; D],
    upper: [f64; D],
}

impl<const D: usize> Domain<D> {
    pub fn new(lower: [f64; D], upper: [f64; D]) -> Result<Self, GridError> {
        if D == 0 {
            return Err(GridError::ZeroDimension);
        }
        for axis in 0..D {
            if !lower[axis].is_finite() || !upper[axis].is_finite() {
                return Err(GridError::NonFinite { axis });
            }
            if upper[axis] <= lower[axis] {
                return Err(GridError::EmptyAxis { axis, lower: lower[axis], upper: upper[axis] });
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^D`.
    pub fn cube(lo: f64, hi: f64) -> Result<Self, GridError> {
        Self::new([lo; D], [hi; D])
    }

    pub fn lower(&self) -> &[f64; D] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64; D] {
        &self.upper
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..D).map(|i| self.extent(i)).product()
    }

    /// Closed-box membership with a small relative slack for rounding at faces.
    pub fn contains(&self, x: &[f64; D]) -> bool {
        (0..D).all(|i| {
            let slack = 1e-12 * self.extent(i).max(1.0);
            x[i] >= self.lower[i] - slack && x[i] <= self.upper[i] + slack
        })
    }
}

/// A dyadic cell. Ordering is by level, then lexicographically by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell<const D: usize> {
    pub level: u32,
    pub index: [u32; D],
}

impl<const D: usize> Cell<D> {
    pub const fn new(level: u32, index: [u32; D]) -> Self {
        Self { level, index }
    }

    pub fn parent(&self) -> Option<Self> {
        if self.level == 0 {
            return None;
        }
        let mut index = self.index;
        for i in index.iter_mut() {
            *i >>= 1;
        }
        Some(Self { level: self.level - 1, index })
    }

    /// The `2^D` children at `level + 1`, child `k` taking the upper half
    /// along axis `i` iff bit `i` of `k` is set.
    pub fn children(&self) -> SmallVec<[Self; 4]> {
        (0..1usize << D)
            .map(|k| {
                let mut index = self.index;
                for (axis, i) in index.iter_mut().enumerate() {
                    *i = 2 * *i + ((k >> axis) & 1) as u32;
                }
                Self { level: self.level + 1, index }
            })
            .collect()
    }

    /// True if `self` equals `other` or contains it as a descendant.
    pub fn is_ancestor_or_self(&self, other: &Self) -> bool {
        if other.level < self.level {
            return false;
        }
        let shift = other.level - self.level;
        (0..D).all(|i| (other.index[i] >> shift) == self.index[i])
    }
}

/// Splits a cell into its `2^D` dyadic children.
pub fn refine_cell<const D: usize>(cell: &Cell<D>) -> SmallVec<[Cell<D>; 4]> {
    cell.children()
}

/// Geometric box of a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellBox<const D: usize> {
    pub origin: [f64; D],
    pub size: f64,
}

impl<const D: usize> CellBox<D> {
    /// Corner `k`: coordinate `i` is `origin[i] + size` iff bit `i` of `k` is set.
    pub fn vertex(&self, k: usize) -> [f64; D] {
        let mut v = self.origin;
        for (i, c) in v.iter_mut().enumerate() {
            if (k >> i) & 1 == 1 {
                *c += self.size;
            }
        }
        v
    }

    /// All `2^D` corners in lexicographic order, axis 0 varying fastest.
    pub fn vertices(&self) -> SmallVec<[[f64; D]; 4]> {
        (0..1usize << D).map(|k| self.vertex(k)).collect()
    }

    pub fn center(&self) -> [f64; D] {
        let mut c = self.origin;
        for v in c.iter_mut() {
            *v += 0.5 * self.size;
        }
        c
    }

    pub fn volume(&self) -> f64 {
        libm::pow(self.size, D as f64)
    }

    /// Local coordinates in `[0, 1]^D`, or `None` if `x` lies outside the
    /// closed box (beyond a rounding slack).
    pub fn local(&self, x: &[f64; D]) -> Option<[f64; D]> {
        const SLACK: f64 = 1e-10;
        let mut t = [0.0; D];
        for i in 0..D {
            let s = (x[i] - self.origin[i]) / self.size;
            if !(-SLACK..=1.0 + SLACK).contains(&s) {
                return None;
            }
            t[i] = s.clamp(0.0, 1.0);
        }
        Some(t)
    }
}

/// A base tessellation: domain plus the level-0 cell size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<const D: usize> {
    domain: Domain<D>,
    base_size: f64,
    base_counts: [u32; D],
}

impl<const D: usize> Grid<D> {
    pub fn new(domain: Domain<D>, base_size: f64) -> Result<Self, GridError> {
        if !(base_size.is_finite() && base_size > 0.0) {
            return Err(GridError::BadBaseSize(base_size));
        }
        let mut base_counts = [0u32; D];
        for (axis, count) in base_counts.iter_mut().enumerate() {
            let extent = domain.extent(axis);
            let ratio = extent / base_size;
            let rounded = libm::round(ratio);
            if rounded < 1.0
                || libm::fabs(ratio - rounded) > DIVISIBILITY_TOL * rounded
                || rounded > MAX_AXIS_CELLS as f64
            {
                return Err(GridError::NotDivisible { axis, extent, base_size });
            }
            *count = rounded as u32;
        }
        Ok(Self { domain, base_size, base_counts })
    }

    pub fn domain(&self) -> &Domain<D> {
        &self.domain
    }

    pub fn base_size(&self) -> f64 {
        self.base_size
    }

    pub fn base_counts(&self) -> &[u32; D] {
        &self.base_counts
    }

    /// Cell side length at `level`, in domain units.
    pub fn cell_size(&self, level: u32) -> f64 {
        libm::ldexp(self.base_size, -(level as i32))
    }

    /// Number of cells along `axis` at `level`.
    pub fn axis_cells(&self, axis: usize, level: u32) -> u64 {
        (self.base_counts[axis] as u64) << level
    }

    pub fn check_level(&self, level: u32) -> Result<(), GridError> {
        for axis in 0..D {
            if level >= 32 || self.axis_cells(axis, level) > MAX_AXIS_CELLS {
                return Err(GridError::LevelTooDeep { axis, level });
            }
        }
        Ok(())
    }

    /// Number of cells in the uniform tessellation at `level`.
    pub fn uniform_count(&self, level: u32) -> u64 {
        (0..D).map(|axis| self.axis_cells(axis, level)).product()
    }

    pub fn contains_cell(&self, cell: &Cell<D>) -> bool {
        cell.level < 32 && (0..D).all(|i| (cell.index[i] as u64) < self.axis_cells(i, cell.level))
    }

    pub fn cell_box(&self, cell: &Cell<D>) -> CellBox<D> {
        let size = self.cell_size(cell.level);
        let mut origin = self.domain.lower;
        for (i, o) in origin.iter_mut().enumerate() {
            *o += cell.index[i] as f64 * size;
        }
        CellBox { origin, size }
    }

    pub fn cell_vertices(&self, cell: &Cell<D>) -> SmallVec<[[f64; D]; 4]> {
        self.cell_box(cell).vertices()
    }

    /// Leaf cell at `level` containing `x`, clamped to the domain.
    pub fn locate(&self, x: &[f64; D], level: u32) -> Cell<D> {
        let size = self.cell_size(level);
        let mut index = [0u32; D];
        for i in 0..D {
            let raw = libm::floor((x[i] - self.domain.lower[i]) / size);
            let max = self.axis_cells(i, level) - 1;
            index[i] = raw.clamp(0.0, max as f64) as u32;
        }
        Cell { level, index }
    }

    /// Cells of the uniform tessellation at `level`, in index order.
    pub fn uniform_cells(&self, level: u32) -> Vec<Cell<D>> {
        let counts: [u64; D] = core::array::from_fn(|i| self.axis_cells(i, level));
        let total = self.uniform_count(level) as usize;
        let mut out = Vec::with_capacity(total);
        let mut index = [0u32; D];
        for _ in 0..total {
            out.push(Cell { level, index });
            // Odometer with the last axis varying fastest keeps the output sorted.
            for axis in (0..D).rev() {
                index[axis] += 1;
                if (index[axis] as u64) < counts[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }
        out
    }
}

/// A non-graded partition of the domain into leaf cells.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveMesh<const D: usize> {
    pub grid: Grid<D>,
    pub cells: Vec<Cell<D>>,
}

impl<const D: usize> AdaptiveMesh<D> {
    pub fn domain(&self) -> &Domain<D> {
        self.grid.domain()
    }

    pub fn base_size(&self) -> f64 {
        self.grid.base_size()
    }

    /// Sorts cells by level, then index.
    pub fn sort(&mut self) {
        self.cells.sort_unstable();
    }

    pub fn total_volume(&self) -> f64 {
        self.cells.iter().map(|c| self.grid.cell_box(c).volume()).sum()
    }
}

/// Uniform tessellation of `domain` at `level` with level-0 cell size `h0`.
pub fn uniform_tessellation<const D: usize>(
    domain: Domain<D>,
    level: u32,
    h0: f64,
) -> Result<AdaptiveMesh<D>, GridError> {
    let grid = Grid::new(domain, h0)?;
    grid.check_level(level)?;
    Ok(AdaptiveMesh { cells: grid.uniform_cells(level), grid })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError<const D: usize> {
    #[error("{} cell(s) lie outside the grid, first {:?}", .0.len(), .0.first())]
    OutOfRange(Vec<Cell<D>>),
    #[error("{} overlapping cell pair(s), first {:?}", .0.len(), .0.first())]
    Overlap(Vec<(Cell<D>, Cell<D>)>),
    #[error("coverage gap: {} uncovered region(s), first {:?}", .0.len(), .0.first())]
    Gap(Vec<Cell<D>>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionReport {
    pub cells: usize,
    pub total_volume: f64,
    pub domain_volume: f64,
    /// `|total - domain| / domain`.
    pub relative_discrepancy: f64,
}

/// Checks that the leaf cells are pairwise disjoint and cover the domain.
///
/// Two dyadic cells overlap iff one is an ancestor of (or equal to) the
/// other, so overlap detection walks ancestor chains. Gaps are found by a
/// top-down sweep from the base cells.
pub fn validate_partition<const D: usize>(mesh: &AdaptiveMesh<D>) -> Result<PartitionReport, PartitionError<D>> {
    let grid = &mesh.grid;
    let out_of_range: Vec<Cell<D>> = mesh.cells.iter().copied().filter(|c| !grid.contains_cell(c)).collect();
    if !out_of_range.is_empty() {
        return Err(PartitionError::OutOfRange(out_of_range));
    }

    let mut leaves: BTreeSet<Cell<D>> = BTreeSet::new();
    let mut overlaps = Vec::new();
    for cell in &mesh.cells {
        if !leaves.insert(*cell) {
            overlaps.push((*cell, *cell));
        }
    }
    // Strict ancestors of any leaf; a leaf that is also in here overlaps.
    let mut interior: BTreeSet<Cell<D>> = BTreeSet::new();
    for cell in &leaves {
        let mut cur = cell.parent();
        while let Some(p) = cur {
            if leaves.contains(&p) {
                overlaps.push((p, *cell));
            }
            if !interior.insert(p) {
                // Ancestors above an already-seen interior cell are recorded
                // and checked already.
                break;
            }
            cur = p.parent();
        }
    }
    if !overlaps.is_empty() {
        overlaps.sort_unstable_by(|a, b| match a.0.cmp(&b.0) {
            Ordering::Equal => a.1.cmp(&b.1),
            o => o,
        });
        return Err(PartitionError::Overlap(overlaps));
    }

    let mut gaps = Vec::new();
    let mut stack = grid.uniform_cells(0);
    stack.reverse();
    while let Some(cell) = stack.pop() {
        if leaves.contains(&cell) {
            continue;
        }
        if interior.contains(&cell) {
            let mut kids = cell.children();
            kids.reverse();
            stack.extend(kids);
        } else {
            gaps.push(cell);
        }
    }
    if !gaps.is_empty() {
        gaps.sort_unstable();
        return Err(PartitionError::Gap(gaps));
    }

    let total_volume = mesh.total_volume();
    let domain_volume = grid.domain().volume();
    Ok(PartitionReport {
        cells: mesh.cells.len(),
        total_volume,
        domain_volume,
        relative_discrepancy: libm::fabs(total_volume - domain_volume) / domain_volume,
    })
}
