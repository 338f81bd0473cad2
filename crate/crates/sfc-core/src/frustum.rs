//! Lossless 2D organization of a projected cloud.
//!
//! Every point keeps its cell `(u, v)` and additionally gets an in-frustum
//! index `m`: its 0-based position among the points sharing that cell, in
//! scan order. An indicator bit marks the last point of each frustum so a
//! frustum can be walked sequentially without knowing its size up front.
//! Construction sorts the point ids by `(v, u)` with a stable sort and
//! counts run positions, so no point is ever dropped.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::Projected;

#[derive(Debug, Clone)]
pub struct FrustumGrid {
    height: usize,
    width: usize,
    u: Vec<u32>,
    v: Vec<u32>,
    ranges: Vec<f64>,
    m: Vec<u32>,
    indicator: Vec<u8>,
    counts: HashMap<(u32, u32), u32>,
    order: Vec<u32>,
}

/// Organize projected points into per-cell frustum point sets.
pub fn build_frustum_grid(
    projected: &[Projected],
    height: usize,
    width: usize,
) -> Result<FrustumGrid> {
    let n = projected.len();
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut ranges = Vec::with_capacity(n);
    for (k, p) in projected.iter().enumerate() {
        if p.u as usize >= width || p.v as usize >= height {
            return Err(Error::OutOfBounds {
                index: k,
                u: p.u,
                v: p.v,
            });
        }
        u.push(p.u);
        v.push(p.v);
        ranges.push(p.range);
    }

    // Stable sort by (v, u): ties keep scan order, which is what assigns m.
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by_key(|&k| (v[k as usize], u[k as usize]));

    let mut m = vec![0u32; n];
    let mut indicator = vec![0u8; n];
    let mut counts = HashMap::new();
    let mut at = 0;
    while at < n {
        let head = order[at] as usize;
        let cell = (u[head], v[head]);
        let mut end = at + 1;
        while end < n {
            let k = order[end] as usize;
            if (u[k], v[k]) != cell {
                break;
            }
            end += 1;
        }
        for (pos, &k) in order[at..end].iter().enumerate() {
            m[k as usize] = pos as u32;
            indicator[k as usize] = if pos + 1 == end - at { 0 } else { 1 };
        }
        counts.insert(cell, (end - at) as u32);
        at = end;
    }

    Ok(FrustumGrid {
        height,
        width,
        u,
        v,
        ranges,
        m,
        indicator,
        counts,
        order,
    })
}

impl FrustumGrid {
    /// Assemble a grid from already-assigned coordinates. Used when a
    /// downsampling pass has rewritten `(u, v, m)` itself; `m` must be
    /// contiguous from 0 within each cell.
    pub(crate) fn from_assigned(
        height: usize,
        width: usize,
        u: Vec<u32>,
        v: Vec<u32>,
        m: Vec<u32>,
        ranges: Vec<f64>,
    ) -> FrustumGrid {
        let n = u.len();
        let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
        for k in 0..n {
            *counts.entry((u[k], v[k])).or_insert(0) += 1;
        }
        let mut indicator = vec![0u8; n];
        for k in 0..n {
            let c = counts[&(u[k], v[k])];
            debug_assert!(m[k] < c, "in-frustum index must be contiguous");
            indicator[k] = if m[k] + 1 == c { 0 } else { 1 };
        }
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_by_key(|&k| (v[k as usize], u[k as usize], m[k as usize]));
        FrustumGrid {
            height,
            width,
            u,
            v,
            ranges,
            m,
            indicator,
            counts,
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Cell coordinates of point `k`.
    pub fn cell(&self, k: usize) -> (u32, u32) {
        (self.u[k], self.v[k])
    }

    /// In-frustum index of point `k`.
    pub fn frustum_index(&self, k: usize) -> u32 {
        self.m[k]
    }

    /// 0 marks the last point of its frustum, 1 means more follow.
    pub fn indicator(&self, k: usize) -> u8 {
        self.indicator[k]
    }

    pub fn range(&self, k: usize) -> f64 {
        self.ranges[k]
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    /// Point count of cell `(u, v)`; 0 when unoccupied.
    pub fn frustum_size(&self, u: u32, v: u32) -> u32 {
        self.counts.get(&(u, v)).copied().unwrap_or(0)
    }

    /// Largest frustum point count in the grid.
    pub fn max_frustum_size(&self) -> Result<u32> {
        self.counts.values().copied().max().ok_or(Error::EmptyCloud)
    }

    /// Number of occupied cells.
    pub fn occupied_cells(&self) -> usize {
        self.counts.len()
    }

    /// Occupied cells with their counts, sorted by (v, u) for deterministic
    /// iteration.
    pub fn cells_sorted(&self) -> Vec<((u32, u32), u32)> {
        let mut cells: Vec<_> = self.counts.iter().map(|(&c, &n)| (c, n)).collect();
        cells.sort_by_key(|&((u, v), _)| (v, u));
        cells
    }

    /// Point ids sorted lexicographically by (v, u, m).
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// Projected triple of point `k` as stored in the grid.
    pub fn projected(&self, k: usize) -> Projected {
        Projected {
            u: self.u[k],
            v: self.v[k],
            range: self.ranges[k],
        }
    }

    /// Total of all cell counts; equals the point count when the structure
    /// is intact.
    pub fn count_sum(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proj(u: u32, v: u32, range: f64) -> Projected {
        Projected { u, v, range }
    }

    #[test]
    fn single_cell_scan_order() {
        let pts = vec![proj(5, 5, 3.0), proj(5, 5, 1.0), proj(5, 5, 2.0)];
        let grid = build_frustum_grid(&pts, 8, 8).unwrap();
        assert_eq!(
            (0..3).map(|k| grid.frustum_index(k)).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(
            (0..3).map(|k| grid.indicator(k)).collect::<Vec<_>>(),
            vec![1, 1, 0]
        );
        assert_eq!(grid.frustum_size(5, 5), 3);
        assert_eq!(grid.max_frustum_size().unwrap(), 3);
    }

    #[test]
    fn distinct_cells_all_zero() {
        let pts = vec![proj(0, 0, 1.0), proj(1, 0, 1.0), proj(2, 3, 1.0)];
        let grid = build_frustum_grid(&pts, 4, 4).unwrap();
        for k in 0..3 {
            assert_eq!(grid.frustum_index(k), 0);
            assert_eq!(grid.indicator(k), 0);
        }
        assert_eq!(grid.max_frustum_size().unwrap(), 1);
    }

    #[test]
    fn out_of_bounds_rejected() {
        let pts = vec![proj(0, 0, 1.0), proj(9, 0, 1.0)];
        let err = build_frustum_grid(&pts, 4, 4).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { index: 1, .. }));
    }

    #[test]
    fn empty_cloud() {
        let grid = build_frustum_grid(&[], 4, 4).unwrap();
        assert_eq!(grid.len(), 0);
        assert_eq!(grid.frustum_size(0, 0), 0);
        assert!(matches!(grid.max_frustum_size(), Err(Error::EmptyCloud)));
    }

    #[test]
    fn rebuild_is_identical() {
        let pts = vec![
            proj(1, 1, 4.0),
            proj(1, 1, 2.0),
            proj(0, 1, 9.0),
            proj(3, 2, 1.0),
        ];
        let a = build_frustum_grid(&pts, 4, 4).unwrap();
        let b = build_frustum_grid(&pts, 4, 4).unwrap();
        assert_eq!(a.order(), b.order());
        for k in 0..pts.len() {
            assert_eq!(a.frustum_index(k), b.frustum_index(k));
            assert_eq!(a.indicator(k), b.indicator(k));
        }
    }
}
