//! Per-cell multilinear approximants and the refinement decision variable.

use smallvec::SmallVec;
use thiserror::Error;

use crate::grid::{Cell, CellBox, Grid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApproxError {
    #[error("expected {expected} vertex samples, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("point {point:?} lies outside the cell")]
    OutsideCell { point: alloc::vec::Vec<f64> },
}

/// Vertex values in [`CellBox::vertex`] order.
pub type VertexValues = SmallVec<[f64; 4]>;

/// Multilinear interpolant of `2^D` vertex samples on one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalApproximant<const D: usize> {
    cell: Cell<D>,
    bbox: CellBox<D>,
    values: VertexValues,
}

/// Fits the interpolant through `samples` taken at the cell's vertices.
pub fn fit_local<const D: usize>(
    grid: &Grid<D>,
    cell: Cell<D>,
    samples: &[f64],
) -> Result<LocalApproximant<D>, ApproxError> {
    let expected = 1usize << D;
    if samples.len() != expected {
        return Err(ApproxError::Arity { expected, got: samples.len() });
    }
    Ok(LocalApproximant { cell, bbox: grid.cell_box(&cell), values: samples.iter().copied().collect() })
}

/// Tensor-product blend of vertex values at local coordinates `t ∈ [0,1]^D`.
pub(crate) fn blend<const D: usize>(values: &[f64], t: &[f64; D]) -> f64 {
    let mut buf: SmallVec<[f64; 8]> = SmallVec::from_slice(values);
    let mut len = buf.len();
    // Collapse axis 0 first: vertex k and k|1 differ only along axis 0.
    for &ti in t.iter() {
        len /= 2;
        for j in 0..len {
            let a = buf[2 * j];
            let b = buf[2 * j + 1];
            buf[j] = (1.0 - ti) * a + ti * b;
        }
    }
    buf[0]
}

impl<const D: usize> LocalApproximant<D> {
    pub fn cell(&self) -> &Cell<D> {
        &self.cell
    }

    pub fn cell_box(&self) -> &CellBox<D> {
        &self.bbox
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: &[f64; D]) -> Result<f64, ApproxError> {
        match self.bbox.local(x) {
            Some(t) => Ok(blend(&self.values, &t)),
            None => Err(ApproxError::OutsideCell { point: x.to_vec() }),
        }
    }

    /// Evaluation at local coordinates, no bounds check.
    pub fn eval_local(&self, t: &[f64; D]) -> f64 {
        blend(&self.values, t)
    }

    /// `inf_{x ∈ cell} |f̂(x)|`.
    ///
    /// A multilinear function attains its extrema at vertices, so the
    /// infimum is zero when the vertex values straddle (or touch) zero and
    /// the smallest vertex magnitude otherwise.
    pub fn cell_abs_min(&self) -> f64 {
        cell_abs_min(&self.values)
    }

    pub fn has_sign_change(&self) -> bool {
        has_sign_change(&self.values)
    }

    pub fn decision_variable(&self, h: f64, alpha: f64) -> DecisionVariable {
        DecisionVariable::new(self.cell_abs_min(), libm::pow(h, alpha))
    }

    /// Largest vertex magnitude; the natural value scale of the cell.
    pub fn value_scale(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(libm::fabs(*v)))
    }
}

pub fn cell_abs_min(values: &[f64]) -> f64 {
    if has_sign_change(values) {
        return 0.0;
    }
    values.iter().fold(f64::INFINITY, |m, v| m.min(libm::fabs(*v)))
}

/// True when the values contain both signs or an exact zero.
pub fn has_sign_change(values: &[f64]) -> bool {
    let (mut neg, mut pos) = (false, false);
    for &v in values {
        if v <= 0.0 {
            neg = true;
        }
        if v >= 0.0 {
            pos = true;
        }
    }
    neg && pos
}

/// `δ̂ = inf|f̂| / h^α` for one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionVariable {
    pub value: f64,
    pub cell_min_abs: f64,
    pub h_pow_alpha: f64,
}

impl DecisionVariable {
    pub fn new(cell_min_abs: f64, h_pow_alpha: f64) -> Self {
        Self { value: cell_min_abs / h_pow_alpha, cell_min_abs, h_pow_alpha }
    }
}
