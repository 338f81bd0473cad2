//! Shared helpers for the oracle suites. Everything here recomputes
//! structure from first principles so the tests stay independent of the
//! library's internals.

#![allow(dead_code)]

use std::collections::HashMap;

use sfc_core::geometry::Projected;
use sfc_core::rng::SplitMix64;

/// Random projected points on a small grid, with xyz coordinates that are
/// unrelated to the cells (the structural contracts never require them to
/// be physically consistent).
pub struct TestScene {
    pub projected: Vec<Projected>,
    pub xyz: Vec<[f64; 3]>,
    pub height: usize,
    pub width: usize,
}

pub fn random_scene(rng: &mut SplitMix64, n: usize, height: usize, width: usize) -> TestScene {
    let mut projected = Vec::with_capacity(n);
    let mut xyz = Vec::with_capacity(n);
    for _ in 0..n {
        projected.push(Projected {
            u: rng.below(width) as u32,
            v: rng.below(height) as u32,
            range: rng.range_f64(1.0, 50.0),
        });
        xyz.push([
            rng.range_f64(-20.0, 20.0),
            rng.range_f64(-20.0, 20.0),
            rng.range_f64(-3.0, 3.0),
        ]);
    }
    TestScene {
        projected,
        xyz,
        height,
        width,
    }
}

/// Scan-order in-frustum index, recomputed by brute force: how many earlier
/// points share the cell.
pub fn brute_force_m(projected: &[Projected]) -> Vec<u32> {
    let mut seen: HashMap<(u32, u32), u32> = HashMap::new();
    projected
        .iter()
        .map(|p| {
            let entry = seen.entry((p.u, p.v)).or_insert(0);
            let m = *entry;
            *entry += 1;
            m
        })
        .collect()
}

/// Brute-force bucketing by cell, scan order preserved.
pub fn brute_force_buckets(projected: &[Projected]) -> HashMap<(u32, u32), Vec<u32>> {
    let mut buckets: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    for (k, p) in projected.iter().enumerate() {
        buckets.entry((p.u, p.v)).or_default().push(k as u32);
    }
    buckets
}

/// Random feature matrix.
pub fn random_features(rng: &mut SplitMix64, rows: usize, cols: usize) -> sfc_core::Mat {
    sfc_core::Mat::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.range_f64(-2.0, 2.0)).collect(),
    )
    .unwrap()
}
