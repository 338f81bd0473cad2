//! Scan and label file I/O plus a deterministic synthetic scene generator.
//!
//! Scan files are flat little-endian records of four 32-bit floats
//! (x, y, z, intensity). Label files are little-endian 32-bit words per
//! point: semantic class in the low 16 bits, instance id in the high 16.
//! Both formats round-trip bit-exactly.
//!
//! The generator casts rays over a beam raster and returns one point per
//! primitive each ray intersects — deliberately multi-echo, so several
//! surfaces along one line of sight land in the same projection cell and
//! exercise the multi-point frustum paths.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::rng::SplitMix64;

/// Bytes per scan record: x, y, z, intensity as f32.
pub const SCAN_RECORD_BYTES: usize = 16;

/// Read a flat binary scan into a cloud (labels absent).
pub fn read_scan(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path)?;
    if bytes.len() % SCAN_RECORD_BYTES != 0 {
        return Err(Error::MalformedScan {
            path: path.display().to_string(),
            bytes: bytes.len() as u64,
        });
    }
    let n = bytes.len() / SCAN_RECORD_BYTES;
    let mut xyz = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(SCAN_RECORD_BYTES) {
        let f = |i: usize| {
            f32::from_le_bytes([rec[4 * i], rec[4 * i + 1], rec[4 * i + 2], rec[4 * i + 3]]) as f64
        };
        xyz.push([f(0), f(1), f(2)]);
        intensity.push(f(3));
    }
    PointCloud::new(xyz, intensity, None)
}

/// Write a cloud in the flat binary scan format.
pub fn write_scan(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut bytes = Vec::with_capacity(cloud.len() * SCAN_RECORD_BYTES);
    for (p, &i) in cloud.xyz().iter().zip(cloud.intensity()) {
        for c in p {
            bytes.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        bytes.extend_from_slice(&(i as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Read per-point semantic classes (low 16 bits of each record).
pub fn read_labels(path: &Path, expected: usize) -> Result<Vec<u16>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::MalformedLabels {
            path: path.display().to_string(),
            bytes: bytes.len() as u64,
        });
    }
    let n = bytes.len() / 4;
    if n != expected {
        return Err(Error::CountMismatch {
            expected,
            actual: n,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| (u32::from_le_bytes([c[0], c[1], c[2], c[3]]) & 0xFFFF) as u16)
        .collect())
}

/// Write predictions in the label format, instance bits zero.
pub fn write_predictions(path: &Path, predictions: &[u16]) -> Result<()> {
    let mut bytes = Vec::with_capacity(predictions.len() * 4);
    for &p in predictions {
        bytes.extend_from_slice(&(p as u32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Geometry primitive of a synthetic scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    /// Horizontal plane at height `z`.
    Plane { z: f64, class: u16 },
    /// Infinite vertical cylinder (a pole) around `(x, y)`.
    Cylinder {
        x: f64,
        y: f64,
        radius: f64,
        class: u16,
    },
    /// Axis-aligned box.
    Box3 {
        center: [f64; 3],
        half: [f64; 3],
        class: u16,
    },
}

/// Beam raster: rays at the centers of a `rows x cols` grid spanning the
/// given vertical field of view (radians) and the full azimuth circle.
/// `jitter` perturbs each ray direction by up to that fraction of a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamModel {
    pub rows: usize,
    pub cols: usize,
    pub fov_up: f64,
    pub fov_down: f64,
    pub jitter: f64,
}

impl BeamModel {
    pub fn new(rows: usize, cols: usize, fov_up: f64, fov_down: f64, jitter: f64) -> Self {
        BeamModel {
            rows,
            cols,
            fov_up,
            fov_down,
            jitter,
        }
    }
}

/// A primitive list plus a beam model; everything `synth` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub beams: BeamModel,
    pub primitives: Vec<Primitive>,
}

fn ray_hit(p: &Primitive, dir: &[f64; 3]) -> Option<f64> {
    const T_MIN: f64 = 1e-6;
    match *p {
        Primitive::Plane { z, .. } => {
            if dir[2].abs() < 1e-12 {
                return None;
            }
            let t = z / dir[2];
            (t > T_MIN).then_some(t)
        }
        Primitive::Cylinder { x, y, radius, .. } => {
            let a = dir[0] * dir[0] + dir[1] * dir[1];
            if a < 1e-12 {
                return None;
            }
            let b = -2.0 * (x * dir[0] + y * dir[1]);
            let c = x * x + y * y - radius * radius;
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return None;
            }
            let sqrt_disc = disc.sqrt();
            let t0 = (-b - sqrt_disc) / (2.0 * a);
            let t1 = (-b + sqrt_disc) / (2.0 * a);
            if t0 > T_MIN {
                Some(t0)
            } else if t1 > T_MIN {
                Some(t1)
            } else {
                None
            }
        }
        Primitive::Box3 { center, half, .. } => {
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            for axis in 0..3 {
                let lo = center[axis] - half[axis];
                let hi = center[axis] + half[axis];
                if dir[axis].abs() < 1e-12 {
                    if 0.0 < lo || 0.0 > hi {
                        return None;
                    }
                    continue;
                }
                let mut ta = lo / dir[axis];
                let mut tb = hi / dir[axis];
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t_near = t_near.max(ta);
                t_far = t_far.min(tb);
                if t_near > t_far {
                    return None;
                }
            }
            if t_near > T_MIN {
                Some(t_near)
            } else if t_far > T_MIN {
                Some(t_far)
            } else {
                None
            }
        }
    }
}

fn class_of(p: &Primitive) -> u16 {
    match *p {
        Primitive::Plane { class, .. } => class,
        Primitive::Cylinder { class, .. } => class,
        Primitive::Box3 { class, .. } => class,
    }
}

/// Ray-cast the scene. Deterministic for a fixed seed; a different seed
/// jitters the rays differently.
pub fn gen_synthetic_scene(
    primitives: &[Primitive],
    beams: &BeamModel,
    seed: u64,
) -> Result<PointCloud> {
    if primitives.is_empty() {
        return Err(Error::BadSpec("no primitives".into()));
    }
    if beams.rows == 0 || beams.cols == 0 {
        return Err(Error::BadSpec("beam raster must be at least 1x1".into()));
    }
    let fov = beams.fov_up + beams.fov_down;
    if fov <= 0.0 || fov.is_nan() {
        return Err(Error::BadSpec(
            "vertical field of view must be positive".into(),
        ));
    }
    let mut rng = SplitMix64::new(seed);
    let mut xyz = Vec::new();
    let mut intensity = Vec::new();
    let mut labels = Vec::new();
    let elev_cell = fov / beams.rows as f64;
    let az_cell = 2.0 * std::f64::consts::PI / beams.cols as f64;
    for row in 0..beams.rows {
        for col in 0..beams.cols {
            let elev = beams.fov_up - (row as f64 + 0.5) * elev_cell
                + beams.jitter * elev_cell * (rng.next_f64() - 0.5);
            let az = std::f64::consts::PI * (1.0 - (2.0 * col as f64 + 1.0) / beams.cols as f64)
                + beams.jitter * az_cell * (rng.next_f64() - 0.5);
            let dir = [elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin()];
            // One echo per intersected primitive, nearest first.
            let mut hits: Vec<(f64, u16)> = primitives
                .iter()
                .filter_map(|p| ray_hit(p, &dir).map(|t| (t, class_of(p))))
                .collect();
            hits.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (t, class) in hits {
                xyz.push([t * dir[0], t * dir[1], t * dir[2]]);
                let base = 0.15 + 0.6 * ((class as f64 * 0.37).fract());
                intensity.push((base + 0.05 * (rng.next_f64() - 0.5)).clamp(0.0, 1.0));
                labels.push(class);
            }
        }
    }
    PointCloud::new(xyz, intensity, Some(labels))
}

/// Parse the line-based scene description. One `beams` line is required;
/// every other line declares a primitive.
///
/// ```text
/// beams rows=16 cols=64 fov_up_deg=2 fov_down_deg=24 jitter=0.3
/// plane z=-1.5 class=1
/// cylinder x=6 y=0 radius=0.3 class=2
/// box cx=8 cy=-1 cz=0 hx=0.5 hy=0.5 hz=0.5 class=3
/// ```
pub fn parse_scene_spec(text: &str) -> Result<SceneSpec> {
    let mut beams = None;
    let mut primitives = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let kind = tokens.next().unwrap();
        let mut fields = std::collections::HashMap::new();
        for tok in tokens {
            let Some((key, value)) = tok.split_once('=') else {
                return Err(Error::BadSpec(format!(
                    "line {}: expected key=value, got `{tok}`",
                    lineno + 1
                )));
            };
            fields.insert(key.to_string(), value.to_string());
        }
        let get = |key: &str| -> Result<f64> {
            fields
                .get(key)
                .ok_or_else(|| Error::BadSpec(format!("line {}: missing `{key}`", lineno + 1)))?
                .parse()
                .map_err(|_| Error::BadSpec(format!("line {}: bad number for `{key}`", lineno + 1)))
        };
        match kind {
            "beams" => {
                beams = Some(BeamModel::new(
                    get("rows")? as usize,
                    get("cols")? as usize,
                    get("fov_up_deg")?.to_radians(),
                    get("fov_down_deg")?.to_radians(),
                    if fields.contains_key("jitter") {
                        get("jitter")?
                    } else {
                        0.0
                    },
                ));
            }
            "plane" => primitives.push(Primitive::Plane {
                z: get("z")?,
                class: get("class")? as u16,
            }),
            "cylinder" => primitives.push(Primitive::Cylinder {
                x: get("x")?,
                y: get("y")?,
                radius: get("radius")?,
                class: get("class")? as u16,
            }),
            "box" => primitives.push(Primitive::Box3 {
                center: [get("cx")?, get("cy")?, get("cz")?],
                half: [get("hx")?, get("hy")?, get("hz")?],
                class: get("class")? as u16,
            }),
            other => {
                return Err(Error::BadSpec(format!(
                    "line {}: unknown primitive `{other}`",
                    lineno + 1
                )))
            }
        }
    }
    let beams = beams.ok_or_else(|| Error::BadSpec("missing `beams` line".into()))?;
    if primitives.is_empty() {
        return Err(Error::BadSpec("no primitives".into()));
    }
    Ok(SceneSpec { beams, primitives })
}

pub fn read_scene_spec(path: &Path) -> Result<SceneSpec> {
    parse_scene_spec(&fs::read_to_string(path)?)
}
