//! Zero-contour extraction from the per-cell approximants.
//!
//! Each leaf is contoured on its own: segments in 2D (marching squares),
//! triangles in 3D. Crossing points sit on cell edges, where the multilinear
//! approximant is affine, so linear interpolation places them exactly.
//! Ambiguous faces are resolved with the asymptotic decider, the value of the
//! bilinear face function at its saddle point. Vertex values `≤ 0` count as
//! inside. Pieces from neighbouring cells need not meet.

use alloc::vec::Vec;

use smallvec::SmallVec;
use thiserror::Error;

use crate::approx::LocalApproximant;
use crate::grid::Cell;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("geometry extraction supports dimensions 2 and 3, got {0}")]
    UnsupportedDimension(usize),
}

/// A segment (2 points, 2D) or triangle (3 points, 3D) from one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece<const D: usize> {
    pub cell: Cell<D>,
    pub points: SmallVec<[[f64; D]; 3]>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevelSetGeometry<const D: usize> {
    /// Sorted by source cell.
    pub pieces: Vec<Piece<D>>,
}

impl<const D: usize> LevelSetGeometry<D> {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (&Cell<D>, &[f64; D])> {
        self.pieces.iter().flat_map(|p| p.points.iter().map(move |q| (&p.cell, q)))
    }
}

type Edge = (usize, usize);

fn edge(a: usize, b: usize) -> Edge {
    (a.min(b), a.max(b))
}

#[inline]
fn inside(v: f64) -> bool {
    v <= 0.0
}

/// Segments of the zero contour on one square face, as pairs of crossed
/// edges. `corners` lists vertex ids in cyclic order.
fn face_segments(values: &[f64], corners: [usize; 4]) -> SmallVec<[(Edge, Edge); 2]> {
    let v = corners.map(|c| values[c]);
    let inn = v.map(inside);
    let e = |i: usize| edge(corners[i % 4], corners[(i + 1) % 4]);
    let crossed: SmallVec<[usize; 4]> = (0..4).filter(|&i| inn[i] != inn[(i + 1) % 4]).collect();
    let mut out = SmallVec::new();
    match crossed.len() {
        2 => out.push((e(crossed[0]), e(crossed[1]))),
        4 => {
            // Alternating corners, so the denominator cannot vanish.
            let saddle = (v[0] * v[2] - v[1] * v[3]) / (v[0] + v[2] - v[1] - v[3]);
            let center_in = inside(saddle);
            for (i, &corner_in) in inn.iter().enumerate() {
                if corner_in != center_in {
                    out.push((e(i + 3), e(i)));
                }
            }
        }
        _ => {}
    }
    out
}

fn crossing<const D: usize>(a: &LocalApproximant<D>, (k0, k1): Edge) -> [f64; D] {
    let v = a.values();
    let t = v[k0] / (v[k0] - v[k1]);
    let b = a.cell_box();
    let p0 = b.vertex(k0);
    let p1 = b.vertex(k1);
    core::array::from_fn(|i| if p0[i] == p1[i] { p0[i] } else { p0[i] + t * (p1[i] - p0[i]) })
}

fn contour_square<const D: usize>(a: &LocalApproximant<D>) -> Vec<Piece<D>> {
    face_segments(a.values(), [0, 1, 3, 2])
        .into_iter()
        .map(|(e0, e1)| Piece { cell: *a.cell(), points: [crossing(a, e0), crossing(a, e1)].into_iter().collect() })
        .collect()
}

fn contour_cube<const D: usize>(a: &LocalApproximant<D>) -> Vec<Piece<D>> {
    let values = a.values();
    let mut links: SmallVec<[(Edge, Edge); 12]> = SmallVec::new();
    for axis in 0..3 {
        let (b, c) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for side in 0..2 {
            let base = side << axis;
            let corners = [base, base | 1 << b, base | 1 << b | 1 << c, base | 1 << c];
            links.extend(face_segments(values, corners));
        }
    }
    if links.is_empty() {
        return Vec::new();
    }
    // Every crossed edge lies on two faces and ends one segment on each, so
    // the links form disjoint cycles.
    let mut nodes: SmallVec<[Edge; 12]> = links.iter().flat_map(|&(p, q)| [p, q]).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let neighbours = |n: Edge| -> SmallVec<[Edge; 2]> {
        links
            .iter()
            .filter_map(|&(p, q)| {
                if p == n {
                    Some(q)
                } else if q == n {
                    Some(p)
                } else {
                    None
                }
            })
            .collect()
    };
    let mut seen: SmallVec<[Edge; 12]> = SmallVec::new();
    let mut pieces = Vec::new();
    for &start in &nodes {
        if seen.contains(&start) {
            continue;
        }
        let mut cycle: SmallVec<[Edge; 12]> = SmallVec::new();
        let mut prev = start;
        let mut cur = start;
        loop {
            cycle.push(cur);
            seen.push(cur);
            let nb = neighbours(cur);
            let next = nb.iter().copied().find(|&n| n != prev && !cycle.contains(&n));
            match next {
                Some(n) => {
                    prev = cur;
                    cur = n;
                }
                None => break,
            }
        }
        let pts: SmallVec<[[f64; D]; 12]> = cycle.iter().map(|&e| crossing(a, e)).collect();
        for i in 1..pts.len().saturating_sub(1) {
            pieces.push(Piece { cell: *a.cell(), points: [pts[0], pts[i], pts[i + 1]].into_iter().collect() });
        }
    }
    pieces
}

/// Contour of one cell's approximant.
pub fn extract_cell<const D: usize>(a: &LocalApproximant<D>) -> Result<Vec<Piece<D>>, ExtractError> {
    match D {
        2 => Ok(contour_square(a)),
        3 => Ok(contour_cube(a)),
        _ => Err(ExtractError::UnsupportedDimension(D)),
    }
}

/// Union of the per-cell contours, in leaf order.
pub fn extract_levelset<const D: usize>(leaves: &[LocalApproximant<D>]) -> Result<LevelSetGeometry<D>, ExtractError> {
    if D != 2 && D != 3 {
        return Err(ExtractError::UnsupportedDimension(D));
    }
    #[cfg(feature = "parallel")]
    let per_cell: Vec<Vec<Piece<D>>> = {
        use rayon::prelude::*;
        leaves.par_iter().map(extract_cell).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let per_cell: Vec<Vec<Piece<D>>> = leaves.iter().map(extract_cell).collect::<Result<_, _>>()?;
    let mut pieces: Vec<Piece<D>> = per_cell.into_iter().flatten().collect();
    pieces.sort_by_key(|p| p.cell);
    Ok(LevelSetGeometry { pieces })
}
