//! Point cloud downsampling on the frustum grid.
//!
//! The 2D plane splits into non-overlapping stride windows. Each window
//! merges the frustums it covers into one point set (ordered by `(v, u, m)`
//! via frustum visiting), and farthest point sampling in 3D picks
//! `ceil(L / (s_h * s_w))` of its `L` points. Selected points land on the
//! downsampled plane at `(u / s_w, v / s_h)` with a fresh in-frustum index
//! assigned in sampling order. Every window touches each of its points a
//! bounded number of times, so the whole pass is linear in the cloud size.

use crate::error::{Error, Result};
use crate::frustum::FrustumGrid;
use crate::hashindex::{visit_frustum, HashIndex};
use crate::rng::SplitMix64;

/// How farthest point sampling picks its first point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedPolicy {
    /// First point of the input list. Deterministic default.
    First,
    /// Seeded uniform choice.
    Random(u64),
}

/// Greedy max-min-distance subset selection. Returns `count` indices into
/// `xyz`; after the seed, each pick maximizes the minimum Euclidean distance
/// to the already-selected set, ties broken by the smallest index.
pub fn fps(xyz: &[[f64; 3]], count: usize, seed: SeedPolicy) -> Result<Vec<usize>> {
    let n = xyz.len();
    if count == 0 || count > n {
        return Err(Error::BadCount {
            requested: count,
            available: n,
        });
    }
    let seed_index = match seed {
        SeedPolicy::First => 0,
        SeedPolicy::Random(s) => SplitMix64::new(s).below(n),
    };
    let mut selected = Vec::with_capacity(count);
    selected.push(seed_index);
    // Squared min-distance of every point to the selected set; selected
    // points drop to -inf so coincident points can never be re-picked.
    let mut min_d2: Vec<f64> = xyz.iter().map(|p| dist2(p, &xyz[seed_index])).collect();
    min_d2[seed_index] = f64::NEG_INFINITY;
    while selected.len() < count {
        let mut best = 0;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, &d2) in min_d2.iter().enumerate() {
            if d2 > best_d2 {
                best_d2 = d2;
                best = i;
            }
        }
        selected.push(best);
        min_d2[best] = f64::NEG_INFINITY;
        for (i, d2) in min_d2.iter_mut().enumerate() {
            let nd = dist2(&xyz[i], &xyz[best]);
            if nd < *d2 {
                *d2 = nd;
            }
        }
    }
    Ok(selected)
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Output of a windowed sampling pass: which parent points survived and
/// where they sit on the downsampled plane.
#[derive(Debug, Clone)]
pub struct SampledCloud {
    parent_indices: Vec<u32>,
    u: Vec<u32>,
    v: Vec<u32>,
    m: Vec<u32>,
    ranges: Vec<f64>,
    strides: (usize, usize),
    parent_len: usize,
    height: usize,
    width: usize,
}

impl SampledCloud {
    pub fn len(&self) -> usize {
        self.parent_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent_indices.is_empty()
    }

    /// Indices into the parent cloud, in sampling order.
    pub fn parent_indices(&self) -> &[u32] {
        &self.parent_indices
    }

    /// Rewritten cell coordinates of sampled point `i`.
    pub fn cell(&self, i: usize) -> (u32, u32) {
        (self.u[i], self.v[i])
    }

    pub fn frustum_index(&self, i: usize) -> u32 {
        self.m[i]
    }

    pub fn strides(&self) -> (usize, usize) {
        self.strides
    }

    pub fn parent_len(&self) -> usize {
        self.parent_len
    }

    /// Downsampled grid dimensions (rows, columns).
    pub fn grid_size(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Windowed frustum sampling with strides `(s_h, s_w)`.
pub fn f2ps(
    grid: &FrustumGrid,
    index: &HashIndex,
    xyz: &[[f64; 3]],
    strides: (usize, usize),
) -> Result<SampledCloud> {
    let (s_h, s_w) = strides;
    if s_h == 0 || s_w == 0 {
        return Err(Error::BadCount {
            requested: 0,
            available: 1,
        });
    }
    if xyz.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} coordinates for a {}-point grid",
            xyz.len(),
            grid.len()
        )));
    }
    let height = grid.height().div_ceil(s_h);
    let width = grid.width().div_ceil(s_w);
    let window_area = s_h * s_w;

    let mut parent_indices = Vec::new();
    let mut out_u = Vec::new();
    let mut out_v = Vec::new();
    let mut out_m = Vec::new();
    let mut out_r = Vec::new();
    let mut merged: Vec<u32> = Vec::new();
    let mut merged_xyz: Vec<[f64; 3]> = Vec::new();

    for wv in 0..height {
        for wu in 0..width {
            merged.clear();
            let v_end = ((wv + 1) * s_h).min(grid.height());
            let u_end = ((wu + 1) * s_w).min(grid.width());
            for v in wv * s_h..v_end {
                for u in wu * s_w..u_end {
                    if grid.frustum_size(u as u32, v as u32) == 0 {
                        continue;
                    }
                    merged.extend(visit_frustum(index, grid, u as u32, v as u32)?);
                }
            }
            if merged.is_empty() {
                continue;
            }
            let target = merged.len().div_ceil(window_area);
            merged_xyz.clear();
            merged_xyz.extend(merged.iter().map(|&k| xyz[k as usize]));
            let picks = fps(&merged_xyz, target, SeedPolicy::First)?;
            for (order, &pick) in picks.iter().enumerate() {
                let k = merged[pick];
                parent_indices.push(k);
                out_u.push(wu as u32);
                out_v.push(wv as u32);
                out_m.push(order as u32);
                out_r.push(grid.range(k as usize));
            }
        }
    }

    Ok(SampledCloud {
        parent_indices,
        u: out_u,
        v: out_v,
        m: out_m,
        ranges: out_r,
        strides,
        parent_len: grid.len(),
        height,
        width,
    })
}

/// Frustum grid over the downsampled plane honoring the rewritten
/// `(u, v, m)` coordinates.
pub fn rebuild_downsampled_grid(sampled: &SampledCloud) -> FrustumGrid {
    FrustumGrid::from_assigned(
        sampled.height,
        sampled.width,
        sampled.u.clone(),
        sampled.v.clone(),
        sampled.m.clone(),
        sampled.ranges.clone(),
    )
}
