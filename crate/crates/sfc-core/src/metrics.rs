//! Segmentation evaluation and the conventional-projection baseline.
//!
//! The baseline mimics the classic range-image pipeline: when several points
//! project onto one cell, only the one closest to the origin survives; the
//! rest are dropped and later restored by a K-nearest-neighbor vote over
//! nearby kept points. Comparing restored predictions against full
//! per-point predictions puts a number on what the projection throws away.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{project_cloud, PointCloud, Projected, SphericalConfig};

/// Ground-truth x prediction counts. Points whose ground truth equals the
/// ignore class are skipped entirely.
#[derive(Debug, Clone)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
    ignore_class: Option<usize>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize, ignore_class: Option<usize>) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
            ignore_class,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, truth: usize, prediction: usize) -> Result<()> {
        if truth >= self.classes {
            return Err(Error::BadLabel {
                index: 0,
                label: truth,
                classes: self.classes,
            });
        }
        if prediction >= self.classes {
            return Err(Error::BadLabel {
                index: 0,
                label: prediction,
                classes: self.classes,
            });
        }
        if Some(truth) == self.ignore_class {
            return Ok(());
        }
        self.counts[truth * self.classes + prediction] += 1;
        Ok(())
    }

    pub fn record_all(&mut self, truth: &[u16], predictions: &[u16]) -> Result<()> {
        if truth.len() != predictions.len() {
            return Err(Error::CountMismatch {
                expected: truth.len(),
                actual: predictions.len(),
            });
        }
        for (&t, &p) in truth.iter().zip(predictions) {
            self.record(t as usize, p as usize)?;
        }
        Ok(())
    }

    pub fn count(&self, truth: usize, prediction: usize) -> u64 {
        self.counts[truth * self.classes + prediction]
    }

    /// Number of evaluated (non-ignored) points.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.classes, other.classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

/// Per-class intersection-over-union and their mean.
#[derive(Debug, Clone)]
pub struct IouReport {
    /// `None` for classes with an empty union (never seen in truth or
    /// prediction); those are excluded from the mean.
    pub per_class: Vec<Option<f64>>,
    /// Mean over classes with a nonzero union, in [0, 1].
    pub mean: f64,
}

/// IoU per class: `TP / (TP + FP + FN)`; the ignore class never
/// participates.
pub fn miou(cm: &ConfusionMatrix) -> IouReport {
    let n = cm.classes();
    let mut per_class = vec![None; n];
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..n {
        if Some(c) == cm.ignore_class {
            continue;
        }
        let tp = cm.count(c, c);
        let fp: u64 = (0..n).filter(|&t| t != c).map(|t| cm.count(t, c)).sum();
        let fn_: u64 = (0..n).filter(|&p| p != c).map(|p| cm.count(c, p)).sum();
        let union = tp + fp + fn_;
        if union == 0 {
            continue;
        }
        let iou = tp as f64 / union as f64;
        per_class[c] = Some(iou);
        sum += iou;
        present += 1;
    }
    let mean = if present == 0 {
        0.0
    } else {
        sum / present as f64
    };
    IouReport { per_class, mean }
}

/// Which points a conventional projection keeps (one per occupied cell) and
/// which it drops.
#[derive(Debug, Clone)]
pub struct Partition {
    pub kept: Vec<u32>,
    pub dropped: Vec<u32>,
}

/// Per cell, keep the point with minimal range (ties: smallest scan index);
/// everything else is dropped. Kept and dropped together cover the cloud.
pub fn partition_by_cell(projected: &[Projected]) -> Partition {
    let mut best: HashMap<(u32, u32), u32> = HashMap::new();
    for (k, p) in projected.iter().enumerate() {
        let k = k as u32;
        best.entry((p.u, p.v))
            .and_modify(|cur| {
                let cr = projected[*cur as usize].range;
                if p.range < cr {
                    *cur = k;
                }
            })
            .or_insert(k);
    }
    let mut kept: Vec<u32> = best.into_values().collect();
    kept.sort_unstable();
    let kept_set: Vec<bool> = {
        let mut mask = vec![false; projected.len()];
        for &k in &kept {
            mask[k as usize] = true;
        }
        mask
    };
    let dropped = (0..projected.len() as u32)
        .filter(|&k| !kept_set[k as usize])
        .collect();
    Partition { kept, dropped }
}

/// Conventional spherical projection of a cloud: project, then keep one
/// point per occupied cell.
pub fn conventional_projection(cloud: &PointCloud, config: &SphericalConfig) -> Result<Partition> {
    let projected = project_cloud(cloud, config)?;
    Ok(partition_by_cell(&projected))
}

/// Restore full per-point predictions from kept-only predictions: every
/// dropped point takes the majority label of its `k` nearest kept points,
/// nearness measured by range difference within a `window x window` cell
/// neighborhood. Vote ties go to the label of the nearest neighbor; a
/// window with no kept point falls back to the kept point of the dropped
/// point's own cell.
#[allow(clippy::too_many_arguments)]
pub fn knn_restore(
    kept: &[u32],
    kept_predictions: &[u16],
    dropped: &[u32],
    projected: &[Projected],
    k: usize,
    window: usize,
    wrap_azimuth: bool,
    width: usize,
) -> Result<Vec<u16>> {
    if kept.len() != kept_predictions.len() {
        return Err(Error::CountMismatch {
            expected: kept.len(),
            actual: kept_predictions.len(),
        });
    }
    let n = projected.len();
    let mut out = vec![0u16; n];
    let mut prediction_of: HashMap<u32, u16> = HashMap::with_capacity(kept.len());
    // Kept points per cell for window scans.
    let mut cell_kept: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    for (&id, &pred) in kept.iter().zip(kept_predictions) {
        out[id as usize] = pred;
        prediction_of.insert(id, pred);
        let p = &projected[id as usize];
        cell_kept.entry((p.u, p.v)).or_default().push(id);
    }

    let half = (window / 2) as i64;
    for &d in dropped {
        let p = &projected[d as usize];
        // (|range difference|, point id) for every kept point in the window.
        let mut candidates: Vec<(f64, u32)> = Vec::new();
        for dv in -half..=half {
            let v = p.v as i64 + dv;
            if v < 0 {
                continue;
            }
            for du in -half..=half {
                let u = p.u as i64 + du;
                let u = if wrap_azimuth {
                    u.rem_euclid(width as i64)
                } else if (0..width as i64).contains(&u) {
                    u
                } else {
                    continue;
                };
                if let Some(ids) = cell_kept.get(&(u as u32, v as u32)) {
                    for &id in ids {
                        let dr = (projected[id as usize].range - p.range).abs();
                        candidates.push((dr, id));
                    }
                }
            }
        }
        if candidates.is_empty() {
            // Own cell always has a kept point; reachable only when the
            // window is degenerate.
            let own = cell_kept
                .get(&(p.u, p.v))
                .and_then(|ids| ids.first())
                .copied();
            match own {
                Some(id) => out[d as usize] = prediction_of[&id],
                None => {
                    return Err(Error::ShapeMismatch(
                        "dropped point has no kept point in its own cell".into(),
                    ))
                }
            }
            continue;
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        // A window wider than the wrapped grid can visit a cell twice; a
        // neighbor must still vote once.
        candidates.dedup_by_key(|c| c.1);
        candidates.truncate(k);
        let mut votes: HashMap<u16, usize> = HashMap::new();
        for &(_, id) in &candidates {
            *votes.entry(prediction_of[&id]).or_insert(0) += 1;
        }
        let max_votes = votes.values().copied().max().unwrap();
        // First candidate (nearest) whose label reached the max vote count.
        let winner = candidates
            .iter()
            .map(|&(_, id)| prediction_of[&id])
            .find(|label| votes[label] == max_votes)
            .unwrap();
        out[d as usize] = winner;
    }
    Ok(out)
}

/// How much of a cloud a conventional projection preserves.
#[derive(Debug, Clone, Copy)]
pub struct DropStats {
    pub total: usize,
    pub preserved: usize,
    pub fraction: f64,
}

/// Preserved count equals the number of occupied cells.
pub fn drop_stats(cloud: &PointCloud, config: &SphericalConfig) -> Result<DropStats> {
    let projected = project_cloud(cloud, config)?;
    Ok(drop_stats_projected(&projected))
}

pub fn drop_stats_projected(projected: &[Projected]) -> DropStats {
    let mut cells: Vec<(u32, u32)> = projected.iter().map(|p| (p.u, p.v)).collect();
    cells.sort_unstable();
    cells.dedup();
    let total = projected.len();
    let preserved = cells.len();
    DropStats {
        total,
        preserved,
        fraction: if total == 0 {
            1.0
        } else {
            preserved as f64 / total as f64
        },
    }
}

/// Per-class totals and dropped counts under a partition.
pub fn per_class_drop(partition: &Partition, labels: &[u16]) -> Vec<(u16, u64, u64)> {
    let mut total: HashMap<u16, u64> = HashMap::new();
    for &l in labels {
        *total.entry(l).or_insert(0) += 1;
    }
    let mut dropped: HashMap<u16, u64> = HashMap::new();
    for &d in &partition.dropped {
        *dropped.entry(labels[d as usize]).or_insert(0) += 1;
    }
    let mut out: Vec<(u16, u64, u64)> = total
        .into_iter()
        .map(|(c, t)| (c, t, dropped.get(&c).copied().unwrap_or(0)))
        .collect();
    out.sort_unstable();
    out
}
