//! Spherical projection and input feature normalization.
//!
//! A LiDAR return at `(x, y, z)` maps onto a 2D grid of `height` rows and
//! `width` columns. The column follows azimuth, the row follows elevation
//! within the sensor's vertical field of view:
//!
//! ```text
//! u = (1/2) * (1 - atan2(y, x) / pi) * width
//! v = (1 - (asin(z / r) + fov_down) / (fov_up + fov_down)) * height
//! ```
//!
//! with `r = sqrt(x^2 + y^2 + z^2)`. Both coordinates are floored, then
//! clamped into the grid. Nothing is dropped here: every point with a
//! positive range receives a cell, and points sharing a cell are kept —
//! downstream modules organize them into per-cell frustum point sets.

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Number of input feature channels: x, y, z, range, intensity.
pub const INPUT_CHANNELS: usize = 5;

/// A raw scan: coordinates in meters, per-point intensity, optional labels,
/// and the assembled `N x 5` input feature table (x, y, z, range, intensity).
#[derive(Debug, Clone)]
pub struct PointCloud {
    xyz: Vec<[f64; 3]>,
    intensity: Vec<f64>,
    labels: Option<Vec<u16>>,
    features: Mat,
}

impl PointCloud {
    pub fn new(xyz: Vec<[f64; 3]>, intensity: Vec<f64>, labels: Option<Vec<u16>>) -> Result<Self> {
        if intensity.len() != xyz.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} intensity values for {} points",
                intensity.len(),
                xyz.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != xyz.len() {
                return Err(Error::CountMismatch {
                    expected: xyz.len(),
                    actual: l.len(),
                });
            }
        }
        for (k, p) in xyz.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinitePoint { index: k });
            }
        }
        let mut features = Mat::zeros(xyz.len(), INPUT_CHANNELS);
        for (k, p) in xyz.iter().enumerate() {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            let row = features.row_mut(k);
            row[0] = p[0];
            row[1] = p[1];
            row[2] = p[2];
            row[3] = r;
            row[4] = intensity[k];
        }
        Ok(PointCloud {
            xyz,
            intensity,
            labels,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.xyz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xyz.is_empty()
    }

    pub fn xyz(&self) -> &[[f64; 3]] {
        &self.xyz
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn labels(&self) -> Option<&[u16]> {
        self.labels.as_deref()
    }

    pub fn features(&self) -> &Mat {
        &self.features
    }

    pub fn range(&self, k: usize) -> f64 {
        self.features.get(k, 3)
    }
}

/// Projection geometry: grid size, vertical field of view (radians), and
/// whether the column axis wraps at the azimuth seam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalConfig {
    pub height: usize,
    pub width: usize,
    pub fov_up: f64,
    pub fov_down: f64,
    pub wrap_azimuth: bool,
}

impl SphericalConfig {
    pub fn new(
        height: usize,
        width: usize,
        fov_up: f64,
        fov_down: f64,
        wrap_azimuth: bool,
    ) -> Result<Self> {
        if height < 1 || width < 1 {
            return Err(Error::BadConfig(format!(
                "grid {height}x{width} must be at least 1x1"
            )));
        }
        if fov_up + fov_down <= 0.0 || !(fov_up + fov_down).is_finite() {
            return Err(Error::BadConfig(
                "vertical field of view must be positive".into(),
            ));
        }
        Ok(SphericalConfig {
            height,
            width,
            fov_up,
            fov_down,
            wrap_azimuth,
        })
    }

    pub fn from_degrees(
        height: usize,
        width: usize,
        fov_up_deg: f64,
        fov_down_deg: f64,
        wrap_azimuth: bool,
    ) -> Result<Self> {
        SphericalConfig::new(
            height,
            width,
            fov_up_deg.to_radians(),
            fov_down_deg.to_radians(),
            wrap_azimuth,
        )
    }

    /// Conventional 64-beam sensor geometry: 64x1800, +3 / -25 degrees.
    pub fn beam64() -> Self {
        SphericalConfig::from_degrees(64, 1800, 3.0, 25.0, true).unwrap()
    }

    /// Conventional 32-beam sensor geometry: 32x1024, +10 / -30 degrees.
    pub fn beam32() -> Self {
        SphericalConfig::from_degrees(32, 1024, 10.0, 30.0, true).unwrap()
    }

    pub fn vertical_fov(&self) -> f64 {
        self.fov_up + self.fov_down
    }

    /// Same field of view on a different grid.
    pub fn with_resolution(&self, height: usize, width: usize) -> Result<Self> {
        SphericalConfig::new(height, width, self.fov_up, self.fov_down, self.wrap_azimuth)
    }
}

/// Grid cell plus range for one projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub u: u32,
    pub v: u32,
    pub range: f64,
}

/// Project a single point. Errors with the point index left at 0; callers
/// iterating a cloud fill it in.
fn project_one(p: &[f64; 3], config: &SphericalConfig) -> Option<Projected> {
    let [x, y, z] = *p;
    let r = (x * x + y * y + z * z).sqrt();
    if r == 0.0 {
        return None;
    }
    let azimuth = y.atan2(x);
    let elevation = (z / r).asin();
    let u_cont = 0.5 * (1.0 - azimuth / std::f64::consts::PI) * config.width as f64;
    let v_cont =
        (1.0 - (elevation + config.fov_down) / self::vertical_span(config)) * config.height as f64;
    let u = (u_cont.floor() as i64).clamp(0, config.width as i64 - 1) as u32;
    let v = (v_cont.floor() as i64).clamp(0, config.height as i64 - 1) as u32;
    Some(Projected { u, v, range: r })
}

fn vertical_span(config: &SphericalConfig) -> f64 {
    config.fov_up + config.fov_down
}

/// Compute per-point grid cells and ranges. A point exactly at the origin has
/// no azimuth or elevation and is reported as an error rather than dropped.
pub fn project_cloud(cloud: &PointCloud, config: &SphericalConfig) -> Result<Vec<Projected>> {
    let mut out = Vec::with_capacity(cloud.len());
    for (k, p) in cloud.xyz().iter().enumerate() {
        match project_one(p, config) {
            Some(proj) => out.push(proj),
            None => return Err(Error::ZeroRangePoint { index: k }),
        }
    }
    Ok(out)
}

/// Project one free-standing point.
pub fn project_point(p: &[f64; 3], config: &SphericalConfig) -> Result<Projected> {
    project_one(p, config).ok_or(Error::ZeroRangePoint { index: 0 })
}

/// Per-channel normalization statistics for the 5 input channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    mean: [f64; INPUT_CHANNELS],
    std: [f64; INPUT_CHANNELS],
}

impl NormStats {
    pub fn new(mean: [f64; INPUT_CHANNELS], std: [f64; INPUT_CHANNELS]) -> Result<Self> {
        if std.iter().any(|s| *s <= 0.0 || s.is_nan()) {
            return Err(Error::BadConfig(
                "normalization standard deviations must be positive".into(),
            ));
        }
        Ok(NormStats { mean, std })
    }

    /// Dataset-wide statistics of a 64-beam urban driving corpus, per channel
    /// (x, y, z, range, intensity).
    pub fn semantic_kitti() -> Self {
        NormStats {
            mean: [10.88, 0.23, -1.04, 12.12, 0.21],
            std: [11.47, 6.91, 0.86, 12.32, 0.16],
        }
    }

    pub fn identity() -> Self {
        NormStats {
            mean: [0.0; INPUT_CHANNELS],
            std: [1.0; INPUT_CHANNELS],
        }
    }

    pub fn mean(&self) -> &[f64; INPUT_CHANNELS] {
        &self.mean
    }

    pub fn std(&self) -> &[f64; INPUT_CHANNELS] {
        &self.std
    }
}

/// Channel-wise `(x - mean) / std`.
pub fn normalize_features(features: &Mat, stats: &NormStats) -> Mat {
    assert_eq!(features.cols(), INPUT_CHANNELS, "feature table must be Nx5");
    let mut out = features.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for c in 0..INPUT_CHANNELS {
            row[c] = (row[c] - stats.mean[c]) / stats.std[c];
        }
    }
    out
}

/// Inverse of [`normalize_features`].
pub fn denormalize_features(features: &Mat, stats: &NormStats) -> Mat {
    assert_eq!(features.cols(), INPUT_CHANNELS, "feature table must be Nx5");
    let mut out = features.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for c in 0..INPUT_CHANNELS {
            row[c] = row[c] * stats.std[c] + stats.mean[c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric_config() -> SphericalConfig {
        SphericalConfig::from_degrees(64, 1800, 14.0, 14.0, true).unwrap()
    }

    #[test]
    fn forward_axis_lands_mid_image() {
        let cfg = symmetric_config();
        let p = project_point(&[1.0, 0.0, 0.0], &cfg).unwrap();
        assert_eq!((p.u, p.v), (900, 32));
        assert!((p.range - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quarter_turn_halves_left_width() {
        let cfg = symmetric_config();
        let p = project_point(&[0.0, 1.0, 0.0], &cfg).unwrap();
        assert_eq!(p.u, 450);
    }

    #[test]
    fn reference_projection_with_clamp() {
        // Frozen from an independent double-precision evaluation of the
        // projection formula: elevation 12.6 degrees exceeds the 3-degree
        // upper fov, so the row clamps to 0.
        let cfg = SphericalConfig::from_degrees(64, 1800, 3.0, 25.0, true).unwrap();
        let p = project_point(&[2.0, -1.0, 0.5], &cfg).unwrap();
        assert_eq!((p.u, p.v), (1032, 0));
        assert!((p.range - 2.29128784747792).abs() < 1e-12);
    }

    #[test]
    fn zero_range_point_is_reported() {
        let cloud =
            PointCloud::new(vec![[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]], vec![0.5, 0.5], None).unwrap();
        let err = project_cloud(&cloud, &SphericalConfig::beam64()).unwrap_err();
        assert!(matches!(err, Error::ZeroRangePoint { index: 1 }));
    }

    #[test]
    fn negative_x_axis_maps_to_seam() {
        let cfg = symmetric_config();
        // atan2(0, -1) = pi, the seam: column 0 before clamping.
        let p = project_point(&[-1.0, 0.0, 0.0], &cfg).unwrap();
        assert_eq!(p.u, 0);
    }

    #[test]
    fn kitti_means_normalize_to_zero() {
        let stats = NormStats::semantic_kitti();
        let feats = Mat::from_rows(&[vec![10.88, 0.23, -1.04, 12.12, 0.21]]).unwrap();
        let out = normalize_features(&feats, &stats);
        for c in 0..INPUT_CHANNELS {
            assert!(
                out.get(0, c).abs() < 1e-12,
                "channel {c}: {}",
                out.get(0, c)
            );
        }
    }

    #[test]
    fn identity_stats_are_identity() {
        let feats = Mat::from_rows(&[vec![1.5, -2.0, 0.25, 3.0, 0.9]]).unwrap();
        let out = normalize_features(&feats, &NormStats::identity());
        assert_eq!(out, feats);
    }

    #[test]
    fn one_std_above_mean_normalizes_to_ones() {
        // Each channel is mean + 1*std, so the normalized row is all ones.
        let stats = NormStats::semantic_kitti();
        let feats = Mat::from_rows(&[vec![22.35, 7.14, -0.18, 24.44, 0.37]]).unwrap();
        let out = normalize_features(&feats, &stats);
        for c in 0..INPUT_CHANNELS {
            assert!((out.get(0, c) - 1.0).abs() < 1e-9, "channel {c}");
        }
    }

    #[test]
    fn normalize_roundtrip() {
        let stats = NormStats::semantic_kitti();
        let feats = Mat::from_rows(&[
            vec![3.0, -7.5, 0.4, 8.2, 0.66],
            vec![50.0, 20.0, 2.0, 55.0, 0.01],
        ])
        .unwrap();
        let back = denormalize_features(&normalize_features(&feats, &stats), &stats);
        for r in 0..feats.rows() {
            for c in 0..feats.cols() {
                let rel = (back.get(r, c) - feats.get(r, c)).abs() / feats.get(r, c).abs().max(1.0);
                assert!(rel < 1e-6);
            }
        }
    }

    #[test]
    fn zero_std_rejected() {
        assert!(NormStats::new([0.0; 5], [1.0, 1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn azimuth_monotonicity() {
        // Increasing azimuth never increases the pre-clamp column.
        let cfg = symmetric_config();
        let mut rng = crate::rng::SplitMix64::new(11);
        let mut points: Vec<(f64, u32)> = (0..500)
            .map(|_| {
                let az = rng.range_f64(-std::f64::consts::PI + 1e-9, std::f64::consts::PI);
                let p = [10.0 * az.cos(), 10.0 * az.sin(), 0.0];
                (az, project_point(&p, &cfg).unwrap().u)
            })
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in points.windows(2) {
            assert!(pair[1].1 <= pair[0].1);
        }
    }

    #[test]
    fn projection_always_in_bounds() {
        let cfg = SphericalConfig::from_degrees(16, 100, 5.0, 20.0, false).unwrap();
        let mut rng = crate::rng::SplitMix64::new(3);
        for _ in 0..2000 {
            let p = [
                rng.range_f64(-50.0, 50.0),
                rng.range_f64(-50.0, 50.0),
                rng.range_f64(-20.0, 20.0),
            ];
            if p.iter().all(|c| *c == 0.0) {
                continue;
            }
            let proj = project_point(&p, &cfg).unwrap();
            assert!(proj.u < 100 && proj.v < 16);
        }
    }
}
