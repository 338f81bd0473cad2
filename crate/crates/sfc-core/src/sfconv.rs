//! Sparse convolution over spherical frustums.
//!
//! For a center point at cell `(u, v)` with range `r`, a `K x K` kernel
//! window slides over the 2D grid. Each occupied window cell contributes
//! exactly one point: the one whose range is closest to `r` (ties go to the
//! smaller in-frustum index). Unoccupied cells contribute nothing — there is
//! no padding and no renormalization, the weighted sum simply has fewer
//! terms. The gather step is materialized as a [`GatherPlan`] so that
//! forward and backward share it and tests can inspect it.
//!
//! Kernel offsets are indexed row-major: offset `i` corresponds to
//! `(dv, du) = (i / K - K/2, i % K - K/2)`, and the column axis optionally
//! wraps at the azimuth seam.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frustum::FrustumGrid;
use crate::geometry::Projected;
use crate::hashindex::HashIndex;
use crate::mat::Mat;
use crate::rng::SplitMix64;

/// Weights of one sparse convolution: `K*K` matrices of shape
/// `c_out x c_in`, one per kernel offset, plus an optional bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    k: usize,
    c_out: usize,
    c_in: usize,
    weights: Vec<Mat>,
    bias: Option<Vec<f64>>,
}

impl ConvKernel {
    pub fn new(k: usize, weights: Vec<Mat>, bias: Option<Vec<f64>>) -> Result<Self> {
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::ShapeMismatch(format!(
                "kernel size {k} must be odd and positive"
            )));
        }
        if weights.len() != k * k {
            return Err(Error::ShapeMismatch(format!(
                "kernel size {k} needs {} weight matrices, got {}",
                k * k,
                weights.len()
            )));
        }
        let c_out = weights[0].rows();
        let c_in = weights[0].cols();
        if weights
            .iter()
            .any(|w| w.rows() != c_out || w.cols() != c_in)
        {
            return Err(Error::ShapeMismatch(
                "kernel weight matrices must share one shape".into(),
            ));
        }
        if let Some(b) = &bias {
            if b.len() != c_out {
                return Err(Error::ShapeMismatch(format!(
                    "bias length {} != c_out {c_out}",
                    b.len()
                )));
            }
        }
        Ok(ConvKernel {
            k,
            c_out,
            c_in,
            weights,
            bias,
        })
    }

    /// Seeded init, uniform in +-1/sqrt(k*k*c_in).
    pub fn seeded(k: usize, c_out: usize, c_in: usize, bias: bool, rng: &mut SplitMix64) -> Self {
        let bound = 1.0 / ((k * k * c_in) as f64).sqrt();
        let weights = (0..k * k)
            .map(|_| {
                let data = (0..c_out * c_in)
                    .map(|_| rng.range_f64(-bound, bound))
                    .collect();
                Mat::from_vec(c_out, c_in, data).unwrap()
            })
            .collect();
        let bias = bias.then(|| (0..c_out).map(|_| rng.range_f64(-bound, bound)).collect());
        ConvKernel {
            k,
            c_out,
            c_in,
            weights,
            bias,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn weight(&self, offset: usize) -> &Mat {
        &self.weights[offset]
    }

    pub fn weights(&self) -> &[Mat] {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    /// Serialize to the flat binary format: a text header naming the shape,
    /// a `data` marker line, then little-endian f32 values ordered
    /// offset-major, then output channel, then input channel, bias last.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        write_kernel(&mut f, self)?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let mut cursor = &bytes[..];
        read_kernel(&mut cursor)
    }
}

pub(crate) fn write_kernel<W: Write>(out: &mut W, kernel: &ConvKernel) -> Result<()> {
    writeln!(out, "sfc-kernel v1")?;
    writeln!(
        out,
        "shape {} {} {} {}",
        kernel.k,
        kernel.c_out,
        kernel.c_in,
        if kernel.bias.is_some() { 1 } else { 0 }
    )?;
    writeln!(out, "data")?;
    for w in &kernel.weights {
        for &x in w.data() {
            out.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    if let Some(b) = &kernel.bias {
        for &x in b {
            out.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn read_kernel<R: Read>(input: &mut R) -> Result<ConvKernel> {
    let header = read_header_lines(input, "sfc-kernel v1")?;
    let shape = header
        .iter()
        .find_map(|l| l.strip_prefix("shape "))
        .ok_or_else(|| Error::BadConfig("kernel file missing shape line".into()))?;
    let fields: Vec<usize> = shape
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::BadConfig(format!("bad kernel shape line: {shape}")))?;
    if fields.len() != 4 {
        return Err(Error::BadConfig(format!("bad kernel shape line: {shape}")));
    }
    let (k, c_out, c_in, has_bias) = (fields[0], fields[1], fields[2], fields[3] != 0);
    let mut weights = Vec::with_capacity(k * k);
    for _ in 0..k * k {
        let data = read_f32_values(input, c_out * c_in)?;
        weights.push(Mat::from_vec(c_out, c_in, data)?);
    }
    let bias = if has_bias {
        Some(read_f32_values(input, c_out)?)
    } else {
        None
    };
    ConvKernel::new(k, weights, bias)
}

/// Read text lines up to and including the `data` marker; the first line
/// must equal `magic`.
pub(crate) fn read_header_lines<R: Read>(input: &mut R, magic: &str) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    let mut line = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        match input.read_exact(&mut byte) {
            Ok(()) => {}
            Err(e) => return Err(Error::Io(e)),
        }
        if byte[0] == b'\n' {
            let text = String::from_utf8(std::mem::take(&mut line))
                .map_err(|_| Error::BadConfig("weight header is not UTF-8".into()))?;
            if lines.is_empty() && text != magic {
                return Err(Error::BadConfig(format!(
                    "expected `{magic}` header, found `{text}`"
                )));
            }
            if text == "data" {
                return Ok(lines);
            }
            lines.push(text);
        } else {
            line.push(byte[0]);
        }
    }
}

pub(crate) fn read_f32_values<R: Read>(input: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 4];
    input.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// One gathered contribution: which kernel offset it enters under and which
/// point supplies the feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanEntry {
    pub offset: u16,
    pub point: u32,
}

/// Materialized gather: per center, the valid window cells and their
/// selected points.
#[derive(Debug, Clone, PartialEq)]
pub struct GatherPlan {
    k: usize,
    centers: usize,
    entries: Vec<PlanEntry>,
    spans: Vec<(u32, u32)>,
}

impl GatherPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn centers(&self) -> usize {
        self.centers
    }

    /// Number of valid window cells gathered for center `c`.
    pub fn valid_count(&self, c: usize) -> usize {
        self.spans[c].1 as usize
    }

    pub fn entries_for(&self, c: usize) -> &[PlanEntry] {
        let (start, len) = self.spans[c];
        &self.entries[start as usize..(start + len) as usize]
    }

    fn from_per_center(k: usize, per_center: Vec<Vec<PlanEntry>>) -> GatherPlan {
        let mut entries = Vec::new();
        let mut spans = Vec::with_capacity(per_center.len());
        for list in &per_center {
            spans.push((entries.len() as u32, list.len() as u32));
            entries.extend_from_slice(list);
        }
        GatherPlan {
            k,
            centers: per_center.len(),
            entries,
            spans,
        }
    }
}

/// Point of cell `(u, v)` with range nearest to `r`; ties go to the smaller
/// in-frustum index. Walks the frustum by key lookups.
fn nearest_in_frustum(
    grid: &FrustumGrid,
    index: &HashIndex,
    u: u32,
    v: u32,
    r: f64,
) -> Option<u32> {
    let count = grid.frustum_size(u, v);
    let mut best: Option<(f64, u32)> = None;
    for m in 0..count {
        let j = index.query(u, v, m)?;
        let d = (grid.range(j as usize) - r).abs();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, j));
        }
    }
    best.map(|(_, j)| j)
}

fn window_cell(center: u32, delta: i64, limit: usize, wrap: bool) -> Option<u32> {
    let pos = center as i64 + delta;
    if wrap {
        Some(pos.rem_euclid(limit as i64) as u32)
    } else if (0..limit as i64).contains(&pos) {
        Some(pos as u32)
    } else {
        None
    }
}

/// Build the gather plan for a `K x K` window around each center point.
pub fn gather_neighbors(
    centers: &[u32],
    grid: &FrustumGrid,
    index: &HashIndex,
    k: usize,
    wrap_azimuth: bool,
) -> Result<GatherPlan> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::ShapeMismatch(format!(
            "kernel size {k} must be odd and positive"
        )));
    }
    let half = (k / 2) as i64;
    let per_center: Vec<Vec<PlanEntry>> = centers
        .par_iter()
        .map(|&c| {
            let (uc, vc) = grid.cell(c as usize);
            let rc = grid.range(c as usize);
            let mut list = Vec::new();
            for dv in -half..=half {
                let Some(v) = window_cell(vc, dv, grid.height(), false) else {
                    continue;
                };
                for du in -half..=half {
                    let Some(u) = window_cell(uc, du, grid.width(), wrap_azimuth) else {
                        continue;
                    };
                    if let Some(j) = nearest_in_frustum(grid, index, u, v, rc) {
                        let offset = ((dv + half) * k as i64 + (du + half)) as u16;
                        list.push(PlanEntry { offset, point: j });
                    }
                }
            }
            list
        })
        .collect();
    Ok(GatherPlan::from_per_center(k, per_center))
}

/// Weighted sum over the gathered features: for each center,
/// `sum_i W_i * f_{j_i} (+ bias)` over the valid plan entries.
pub fn sfc_forward(features: &Mat, plan: &GatherPlan, kernel: &ConvKernel) -> Result<Mat> {
    if features.cols() != kernel.c_in() {
        return Err(Error::ShapeMismatch(format!(
            "features have {} channels, kernel expects {}",
            features.cols(),
            kernel.c_in()
        )));
    }
    let c_out = kernel.c_out();
    let c_in = kernel.c_in();
    let rows: Vec<Vec<f64>> = (0..plan.centers())
        .into_par_iter()
        .map(|c| {
            let mut acc = match kernel.bias() {
                Some(b) => b.to_vec(),
                None => vec![0.0; c_out],
            };
            for e in plan.entries_for(c) {
                let w = kernel.weight(e.offset as usize);
                let f = features.row(e.point as usize);
                let wd = w.data();
                for (o, a) in acc.iter_mut().enumerate() {
                    let wrow = &wd[o * c_in..(o + 1) * c_in];
                    let mut s = 0.0;
                    for i in 0..c_in {
                        s += wrow[i] * f[i];
                    }
                    *a += s;
                }
            }
            acc
        })
        .collect();
    Mat::from_rows(&rows)
}

/// Gradients of the sparse convolution, exact transpose of the forward map.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub features: Mat,
    pub weights: Vec<Mat>,
    pub bias: Option<Vec<f64>>,
}

/// Backpropagate `grad_out` through the plan: scatter `W_i^T * g` into the
/// source features and accumulate `g (x) f_j` into the weight gradients.
pub fn sfc_backward(
    grad_out: &Mat,
    plan: &GatherPlan,
    kernel: &ConvKernel,
    features: &Mat,
) -> Result<Gradients> {
    if grad_out.rows() != plan.centers() || grad_out.cols() != kernel.c_out() {
        return Err(Error::ShapeMismatch(format!(
            "grad_out is {}x{}, plan/kernel expect {}x{}",
            grad_out.rows(),
            grad_out.cols(),
            plan.centers(),
            kernel.c_out()
        )));
    }
    if features.cols() != kernel.c_in() {
        return Err(Error::ShapeMismatch(format!(
            "features have {} channels, kernel expects {}",
            features.cols(),
            kernel.c_in()
        )));
    }
    let c_out = kernel.c_out();
    let c_in = kernel.c_in();
    let mut grad_features = Mat::zeros(features.rows(), c_in);
    let mut grad_weights: Vec<Mat> = (0..kernel.k() * kernel.k())
        .map(|_| Mat::zeros(c_out, c_in))
        .collect();
    let mut grad_bias = kernel.bias().map(|_| vec![0.0; c_out]);

    for c in 0..plan.centers() {
        let g = grad_out.row(c);
        if let Some(gb) = &mut grad_bias {
            for (o, go) in g.iter().enumerate() {
                gb[o] += go;
            }
        }
        for e in plan.entries_for(c) {
            let w = kernel.weight(e.offset as usize);
            let wd = w.data();
            let f = features.row(e.point as usize);
            let gf = grad_features.row_mut(e.point as usize);
            let gw = grad_weights[e.offset as usize].data_mut();
            for o in 0..c_out {
                let go = g[o];
                let wrow = &wd[o * c_in..(o + 1) * c_in];
                let gwrow = &mut gw[o * c_in..(o + 1) * c_in];
                for i in 0..c_in {
                    gf[i] += wrow[i] * go;
                    gwrow[i] += go * f[i];
                }
            }
        }
    }
    Ok(Gradients {
        features: grad_features,
        weights: grad_weights,
        bias: grad_bias,
    })
}

/// Gather for the upsampling convolution. Fine centers live on the original
/// plane; a coarse cell `(uc, vc)` sits at fine position
/// `(uc * rate_w, vc * rate_h)`. Window positions that are exact rate
/// multiples map back to coarse cells and gather there, nearest-by-range as
/// usual. `fine_width` is the column count of the fine plane (for the wrap).
pub fn gather_upsample_neighbors(
    fine_centers: &[Projected],
    coarse_grid: &FrustumGrid,
    coarse_index: &HashIndex,
    rate: (usize, usize),
    k: usize,
    wrap_azimuth: bool,
    fine_width: usize,
) -> Result<GatherPlan> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::ShapeMismatch(format!(
            "kernel size {k} must be odd and positive"
        )));
    }
    let (rate_h, rate_w) = rate;
    if rate_h == 0 || rate_w == 0 {
        return Err(Error::ShapeMismatch("upsampling rate must be >= 1".into()));
    }
    let half = (k / 2) as i64;
    let per_center: Vec<Vec<PlanEntry>> = fine_centers
        .par_iter()
        .map(|center| {
            let mut list = Vec::new();
            for dv in -half..=half {
                let pos_v = center.v as i64 + dv;
                if pos_v < 0 || !(pos_v as u64).is_multiple_of(rate_h as u64) {
                    continue;
                }
                let vc = (pos_v / rate_h as i64) as u32;
                if vc as usize >= coarse_grid.height() {
                    continue;
                }
                for du in -half..=half {
                    let pos_u = center.u as i64 + du;
                    let pos_u = if wrap_azimuth {
                        pos_u.rem_euclid(fine_width as i64)
                    } else if (0..fine_width as i64).contains(&pos_u) {
                        pos_u
                    } else {
                        continue;
                    };
                    if !(pos_u as u64).is_multiple_of(rate_w as u64) {
                        continue;
                    }
                    let uc = (pos_u / rate_w as i64) as u32;
                    if uc as usize >= coarse_grid.width() {
                        continue;
                    }
                    if let Some(j) =
                        nearest_in_frustum(coarse_grid, coarse_index, uc, vc, center.range)
                    {
                        let offset = ((dv + half) * k as i64 + (du + half)) as u16;
                        list.push(PlanEntry { offset, point: j });
                    }
                }
            }
            list
        })
        .collect();
    Ok(GatherPlan::from_per_center(k, per_center))
}

/// Upsampling convolution: gather coarse frustums under the rate mapping,
/// then apply the usual sparse weighted sum.
#[allow(clippy::too_many_arguments)]
pub fn upsample_sfc_forward(
    coarse_features: &Mat,
    coarse_grid: &FrustumGrid,
    coarse_index: &HashIndex,
    fine_centers: &[Projected],
    rate: (usize, usize),
    kernel: &ConvKernel,
    wrap_azimuth: bool,
    fine_width: usize,
) -> Result<Mat> {
    let plan = gather_upsample_neighbors(
        fine_centers,
        coarse_grid,
        coarse_index,
        rate,
        kernel.k(),
        wrap_azimuth,
        fine_width,
    )?;
    sfc_forward(coarse_features, &plan, kernel)
}
