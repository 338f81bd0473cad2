//! Integer-keyed point lookup.
//!
//! Each point is addressed by the triple `(u, v, m)` — cell column, cell
//! row, in-frustum index. The triple packs into one 64-bit key,
//! `v * (W * M) + u * M + m`, where `M` is the largest frustum size in the
//! grid. Any associative map with expected O(1) lookup satisfies the
//! contract; this implementation uses the standard hash map. Lookups of
//! absent triples are a normal case and return `None`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::frustum::FrustumGrid;

/// Pack `(u, v, m)` into a single integer key. Requires `u < width`,
/// `m < max_frustum` and a total key space within 2^63.
pub fn encode_key(u: u32, v: u32, m: u32, width: usize, max_frustum: usize) -> Result<u64> {
    debug_assert!((u as usize) < width, "column outside grid");
    debug_assert!((m as usize) < max_frustum, "in-frustum index outside bound");
    let span = width as u128 * max_frustum as u128;
    if (v as u128 + 1) * span > 1u128 << 63 {
        return Err(Error::KeyOverflow);
    }
    Ok(v as u64 * (width as u64 * max_frustum as u64) + u as u64 * max_frustum as u64 + m as u64)
}

/// Key-to-point-id map over a frustum grid.
#[derive(Debug, Clone)]
pub struct HashIndex {
    map: HashMap<u64, u32>,
    height: usize,
    width: usize,
    max_frustum: usize,
    len: usize,
}

/// Index every point of the grid under its `(u, v, m)` key.
pub fn build_hash_index(grid: &FrustumGrid) -> Result<HashIndex> {
    let max_frustum = if grid.is_empty() {
        1
    } else {
        grid.max_frustum_size()? as usize
    };
    let mut map = HashMap::with_capacity(grid.len());
    for k in 0..grid.len() {
        let (u, v) = grid.cell(k);
        let key = encode_key(u, v, grid.frustum_index(k), grid.width(), max_frustum)?;
        let prev = map.insert(key, k as u32);
        debug_assert!(prev.is_none(), "duplicate (u, v, m) triple");
    }
    Ok(HashIndex {
        map,
        height: grid.height(),
        width: grid.width(),
        max_frustum,
        len: grid.len(),
    })
}

impl HashIndex {
    /// Point id stored under `(u, v, m)`, if any. Out-of-domain triples are
    /// simply absent.
    pub fn query(&self, u: u32, v: u32, m: u32) -> Option<u32> {
        if u as usize >= self.width || v as usize >= self.height || m as usize >= self.max_frustum {
            return None;
        }
        let key = v as u64 * (self.width as u64 * self.max_frustum as u64)
            + u as u64 * self.max_frustum as u64
            + m as u64;
        self.map.get(&key).copied()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Largest frustum size the key encoding was built with.
    pub fn max_frustum_size(&self) -> usize {
        self.max_frustum
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Walk one frustum front to back: query `(u, v, 0)`, then keep increasing
/// `m` until a point carries the end-of-frustum indicator. Returns the empty
/// list for unoccupied cells. A walk longer than the point count means the
/// indicators are inconsistent and is reported as corruption.
pub fn visit_frustum(index: &HashIndex, grid: &FrustumGrid, u: u32, v: u32) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    let mut m = 0u32;
    loop {
        let Some(k) = index.query(u, v, m) else {
            if out.is_empty() {
                return Ok(out);
            }
            // Previous point said more follow, but the next key is absent.
            return Err(Error::CorruptIndicator { u, v });
        };
        out.push(k);
        if out.len() > grid.len() {
            return Err(Error::CorruptIndicator { u, v });
        }
        if grid.indicator(k as usize) == 0 {
            return Ok(out);
        }
        m += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frustum::build_frustum_grid;
    use crate::geometry::Projected;

    fn proj(u: u32, v: u32, range: f64) -> Projected {
        Projected { u, v, range }
    }

    #[test]
    fn zero_triple_zero_key() {
        assert_eq!(encode_key(0, 0, 0, 1800, 32).unwrap(), 0);
    }

    #[test]
    fn key_formula() {
        // v*(W*M) + u*M + m with W=1800, M=32.
        assert_eq!(encode_key(10, 2, 3, 1800, 32).unwrap(), 115_523);
    }

    #[test]
    fn key_overflow_detected() {
        let err = encode_key(0, u32::MAX, 0, usize::MAX >> 8, 1 << 12).unwrap_err();
        assert!(matches!(err, Error::KeyOverflow));
    }

    #[test]
    fn empty_grid_empty_index() {
        let grid = build_frustum_grid(&[], 4, 4).unwrap();
        let index = build_hash_index(&grid).unwrap();
        assert!(index.is_empty());
        assert_eq!(index.query(0, 0, 0), None);
        assert_eq!(
            visit_frustum(&index, &grid, 0, 0).unwrap(),
            Vec::<u32>::new()
        );
    }

    #[test]
    fn triple_roundtrip() {
        let pts = vec![proj(2, 1, 5.0), proj(2, 1, 3.0), proj(2, 1, 8.0)];
        let grid = build_frustum_grid(&pts, 4, 4).unwrap();
        let index = build_hash_index(&grid).unwrap();
        assert_eq!(index.len(), 3);
        for k in 0..3u32 {
            let (u, v) = grid.cell(k as usize);
            assert_eq!(index.query(u, v, grid.frustum_index(k as usize)), Some(k));
        }
        assert_eq!(index.query(0, 0, 0), None);
        assert_eq!(index.query(2, 1, 3), None);
    }

    #[test]
    fn visit_with_mismatched_grid_reports_corruption() {
        // An index built over a 3-point frustum, walked with indicators
        // from a 4-point frustum: the walk runs past the chain's end.
        let three = vec![proj(0, 0, 1.0), proj(0, 0, 2.0), proj(0, 0, 3.0)];
        let grid3 = build_frustum_grid(&three, 4, 4).unwrap();
        let index3 = build_hash_index(&grid3).unwrap();
        let four = vec![
            proj(0, 0, 1.0),
            proj(0, 0, 2.0),
            proj(0, 0, 3.0),
            proj(0, 0, 4.0),
        ];
        let grid4 = build_frustum_grid(&four, 4, 4).unwrap();
        let err = visit_frustum(&index3, &grid4, 0, 0).unwrap_err();
        assert!(matches!(err, Error::CorruptIndicator { u: 0, v: 0 }));
    }

    #[test]
    fn visit_returns_ascending_m() {
        let pts = vec![
            proj(2, 1, 5.0),
            proj(0, 0, 1.0),
            proj(2, 1, 3.0),
            proj(2, 1, 8.0),
        ];
        let grid = build_frustum_grid(&pts, 4, 4).unwrap();
        let index = build_hash_index(&grid).unwrap();
        assert_eq!(visit_frustum(&index, &grid, 2, 1).unwrap(), vec![0, 2, 3]);
        assert_eq!(visit_frustum(&index, &grid, 0, 0).unwrap(), vec![1]);
        assert_eq!(grid.indicator(1), 0);
        assert!(visit_frustum(&index, &grid, 3, 3).unwrap().is_empty());
    }
}
