//! Sampling oracles: exhaustive max-min selection for farthest point
//! sampling, and per-window brute-force decomposition of the windowed pass.

mod common;

use std::collections::HashMap;

use common::{brute_force_m, random_scene};
use sfc_core::frustum::build_frustum_grid;
use sfc_core::hashindex::build_hash_index;
use sfc_core::rng::SplitMix64;
use sfc_core::sampling::{f2ps, fps, rebuild_downsampled_grid, SeedPolicy};

/// Brute-force farthest point sampling: recompute every min-distance from
/// scratch each iteration.
fn oracle_fps(xyz: &[[f64; 3]], count: usize) -> Vec<usize> {
    let d2 = |a: &[f64; 3], b: &[f64; 3]| {
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
    };
    let mut selected = vec![0usize];
    while selected.len() < count {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..xyz.len() {
            if selected.contains(&i) {
                continue;
            }
            let min_d = selected
                .iter()
                .map(|&s| d2(&xyz[i], &xyz[s]))
                .fold(f64::INFINITY, f64::min);
            let better = match best {
                None => true,
                Some((bd, _)) => min_d > bd,
            };
            if better {
                best = Some((min_d, i));
            }
        }
        selected.push(best.unwrap().1);
    }
    selected
}

#[test]
fn fps_matches_exhaustive_oracle() {
    let mut rng = SplitMix64::new(301);
    for _ in 0..50 {
        let n = 2 + rng.below(30);
        let xyz: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                [
                    rng.range_f64(-10.0, 10.0),
                    rng.range_f64(-10.0, 10.0),
                    rng.range_f64(-10.0, 10.0),
                ]
            })
            .collect();
        let count = 1 + rng.below(n);
        assert_eq!(
            fps(&xyz, count, SeedPolicy::First).unwrap(),
            oracle_fps(&xyz, count)
        );
    }
}

/// Group a sampled cloud by downsampled cell, preserving sampling order.
fn sampled_by_window(sampled: &sfc_core::SampledCloud) -> HashMap<(u32, u32), Vec<u32>> {
    let mut map: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    for i in 0..sampled.len() {
        map.entry(sampled.cell(i))
            .or_default()
            .push(sampled.parent_indices()[i]);
    }
    map
}

#[test]
fn windows_match_standalone_fps() {
    let mut rng = SplitMix64::new(302);
    for _ in 0..15 {
        let n = 50 + rng.below(250);
        let scene = random_scene(&mut rng, n, 8, 16);
        let grid = build_frustum_grid(&scene.projected, 8, 16).unwrap();
        let index = build_hash_index(&grid).unwrap();
        let (s_h, s_w) = (2usize, 2usize);
        let sampled = f2ps(&grid, &index, &scene.xyz, (s_h, s_w)).unwrap();
        let by_window = sampled_by_window(&sampled);
        let m_oracle = brute_force_m(&scene.projected);

        // Brute-force window membership, ordered by (v, u, m).
        let mut windows: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        for (k, p) in scene.projected.iter().enumerate() {
            windows
                .entry((p.u / s_w as u32, p.v / s_h as u32))
                .or_default()
                .push(k as u32);
        }
        let mut expected_total = 0usize;
        for (&(wu, wv), members) in &windows {
            let mut ordered = members.clone();
            ordered.sort_by_key(|&k| {
                let p = &scene.projected[k as usize];
                (p.v, p.u, m_oracle[k as usize])
            });
            let target = ordered.len().div_ceil(s_h * s_w);
            expected_total += target;
            let window_xyz: Vec<[f64; 3]> =
                ordered.iter().map(|&k| scene.xyz[k as usize]).collect();
            let picks = fps(&window_xyz, target, SeedPolicy::First).unwrap();
            let expected: Vec<u32> = picks.iter().map(|&i| ordered[i]).collect();
            assert_eq!(
                by_window.get(&(wu, wv)).cloned().unwrap_or_default(),
                expected,
                "window ({wu},{wv})"
            );
        }
        // Count law.
        assert_eq!(sampled.len(), expected_total);
        // Subset law: distinct parent indices, all in range.
        let mut parents = sampled.parent_indices().to_vec();
        parents.sort_unstable();
        let len_before = parents.len();
        parents.dedup();
        assert_eq!(parents.len(), len_before);
        assert!(parents.iter().all(|&k| (k as usize) < n));
    }
}

#[test]
fn identity_strides_preserve_grid() {
    let mut rng = SplitMix64::new(303);
    let scene = random_scene(&mut rng, 120, 8, 16);
    let grid = build_frustum_grid(&scene.projected, 8, 16).unwrap();
    let index = build_hash_index(&grid).unwrap();
    let sampled = f2ps(&grid, &index, &scene.xyz, (1, 1)).unwrap();
    assert_eq!(sampled.len(), 120);
    let mut parents = sampled.parent_indices().to_vec();
    parents.sort_unstable();
    assert_eq!(parents, (0..120u32).collect::<Vec<_>>());
    for i in 0..sampled.len() {
        let k = sampled.parent_indices()[i] as usize;
        assert_eq!(sampled.cell(i), grid.cell(k));
    }
    // Rebuilt grid holds the same per-cell point sets as the parent.
    let rebuilt = rebuild_downsampled_grid(&sampled);
    for v in 0..8u32 {
        for u in 0..16u32 {
            assert_eq!(rebuilt.frustum_size(u, v), grid.frustum_size(u, v));
        }
    }
}

#[test]
fn rebuilt_grid_satisfies_invariants() {
    let mut rng = SplitMix64::new(304);
    for _ in 0..10 {
        let n = 80 + rng.below(200);
        let scene = random_scene(&mut rng, n, 8, 16);
        let grid = build_frustum_grid(&scene.projected, 8, 16).unwrap();
        let index = build_hash_index(&grid).unwrap();
        let (s_h, s_w) = (1 + rng.below(3), 1 + rng.below(3));
        let sampled = f2ps(&grid, &index, &scene.xyz, (s_h, s_w)).unwrap();
        let rebuilt = rebuild_downsampled_grid(&sampled);
        let (h2, w2) = sampled.grid_size();
        assert_eq!(h2, 8usize.div_ceil(s_h));
        assert_eq!(w2, 16usize.div_ceil(s_w));
        assert_eq!(rebuilt.count_sum(), sampled.len() as u64);
        // Bucket oracle over the rewritten coordinates.
        let mut buckets: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        for i in 0..sampled.len() {
            buckets.entry(sampled.cell(i)).or_default().push(i as u32);
        }
        for (&(u, v), members) in &buckets {
            assert_eq!(rebuilt.frustum_size(u, v) as usize, members.len());
            // m values contiguous from zero, in sampling order.
            let mut ms: Vec<u32> = members
                .iter()
                .map(|&i| rebuilt.frustum_index(i as usize))
                .collect();
            ms.sort_unstable();
            assert_eq!(ms, (0..members.len() as u32).collect::<Vec<_>>());
        }
        // Index over the rebuilt grid retrieves every sampled point.
        let rebuilt_index = build_hash_index(&rebuilt).unwrap();
        for i in 0..sampled.len() as u32 {
            let (u, v) = rebuilt.cell(i as usize);
            assert_eq!(
                rebuilt_index.query(u, v, rebuilt.frustum_index(i as usize)),
                Some(i)
            );
        }
    }
}

#[test]
fn sampling_deterministic_across_runs() {
    let mut rng = SplitMix64::new(305);
    let scene = random_scene(&mut rng, 260, 8, 16);
    let grid = build_frustum_grid(&scene.projected, 8, 16).unwrap();
    let index = build_hash_index(&grid).unwrap();
    let a = f2ps(&grid, &index, &scene.xyz, (2, 2)).unwrap();
    let b = f2ps(&grid, &index, &scene.xyz, (2, 2)).unwrap();
    assert_eq!(a.parent_indices(), b.parent_indices());
    for i in 0..a.len() {
        assert_eq!(a.cell(i), b.cell(i));
        assert_eq!(a.frustum_index(i), b.frustum_index(i));
    }
}

#[test]
fn uneven_trailing_windows() {
    // Width not divisible by the stride: the last window is narrower.
    let mut rng = SplitMix64::new(306);
    let scene = random_scene(&mut rng, 100, 5, 13);
    let grid = build_frustum_grid(&scene.projected, 5, 13).unwrap();
    let index = build_hash_index(&grid).unwrap();
    let sampled = f2ps(&grid, &index, &scene.xyz, (2, 4)).unwrap();
    let (h2, w2) = sampled.grid_size();
    assert_eq!((h2, w2), (3, 4));
    for i in 0..sampled.len() {
        let (u, v) = sampled.cell(i);
        assert!((u as usize) < w2 && (v as usize) < h2);
        let k = sampled.parent_indices()[i] as usize;
        let parent = grid.cell(k);
        assert_eq!(u, parent.0 / 4);
        assert_eq!(v, parent.1 / 2);
    }
}
