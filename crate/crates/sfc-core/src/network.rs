//! Forward-only segmentation network over the frustum structure.
//!
//! Encoder-decoder layout: a context block of three conv layers, four
//! extraction layers of residual conv blocks (the last three opening with a
//! stride-(2,2) downsampling block), upsampling convolutions that bring the
//! deep features back to full resolution, concatenation, and a head that
//! decodes per-point class logits. Every point of the input cloud receives
//! a logit row — nothing is dropped on the way through, so no
//! post-processing restoration step exists or is needed.
//!
//! Batch normalization runs in inference mode with supplied statistics.
//! When no weight file is given, parameters come from a seeded uniform
//! init, so runs are reproducible.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::frustum::{build_frustum_grid, FrustumGrid};
use crate::geometry::{
    normalize_features, project_cloud, NormStats, PointCloud, SphericalConfig, INPUT_CHANNELS,
};
use crate::hashindex::{build_hash_index, HashIndex};
use crate::mat::Mat;
use crate::rng::SplitMix64;
use crate::sampling::{f2ps, rebuild_downsampled_grid, SampledCloud};
use crate::sfconv::{
    gather_neighbors, read_f32_values, read_header_lines, sfc_forward, upsample_sfc_forward,
    ConvKernel, GatherPlan,
};

/// Piecewise activation: 0 below -3, identity above 3, `x(x+3)/6` between.
pub fn hardswish(x: f64) -> f64 {
    if x <= -3.0 {
        0.0
    } else if x >= 3.0 {
        x
    } else {
        x * (x + 3.0) / 6.0
    }
}

pub fn hardswish_in_place(m: &mut Mat) {
    for x in m.data_mut() {
        *x = hardswish(*x);
    }
}

/// Inference-mode batch norm statistics and affine parameters, per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnParams {
    pub fn new(scale: Vec<f64>, shift: Vec<f64>, mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        let c = scale.len();
        if shift.len() != c || mean.len() != c || var.len() != c {
            return Err(Error::ShapeMismatch(
                "batch norm parameter lengths differ".into(),
            ));
        }
        if var.iter().any(|v| *v < 0.0) {
            return Err(Error::ShapeMismatch(
                "batch norm variances must be non-negative".into(),
            ));
        }
        Ok(BnParams {
            scale,
            shift,
            mean,
            var,
        })
    }

    pub fn identity(channels: usize) -> Self {
        BnParams {
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }
}

/// `y = scale * (x - mean) / sqrt(var + eps) + shift`, per channel.
pub fn bn_inference(x: &Mat, bn: &BnParams, eps: f64) -> Result<Mat> {
    if x.cols() != bn.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature channels, batch norm has {}",
            x.cols(),
            bn.channels()
        )));
    }
    let inv_std: Vec<f64> = bn.var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for c in 0..row.len() {
            row[c] = bn.scale[c] * (row[c] - bn.mean[c]) * inv_std[c] + bn.shift[c];
        }
    }
    Ok(out)
}

/// Network shape: channel width, class count, strides, and block counts of
/// the four extraction layers. The kernel size is 3 everywhere except the
/// upsampling convolutions, whose kernels grow with the upsampling rate.
#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub spherical: SphericalConfig,
    pub base_channels: usize,
    pub num_classes: usize,
    pub bn_eps: f64,
    pub strides: (usize, usize),
    pub blocks_per_layer: [usize; 4],
    pub norm_stats: Option<NormStats>,
}

impl NetworkConfig {
    pub fn new(
        spherical: SphericalConfig,
        base_channels: usize,
        num_classes: usize,
        bn_eps: f64,
        strides: (usize, usize),
        blocks_per_layer: [usize; 4],
        norm_stats: Option<NormStats>,
    ) -> Result<Self> {
        if base_channels < 2 || !base_channels.is_multiple_of(2) {
            return Err(Error::BadConfig(
                "base channel width must be an even number >= 2".into(),
            ));
        }
        if num_classes < 2 {
            return Err(Error::BadConfig("need at least two classes".into()));
        }
        if bn_eps <= 0.0 || bn_eps.is_nan() {
            return Err(Error::BadConfig("bn_eps must be positive".into()));
        }
        if strides.0 == 0 || strides.1 == 0 || strides.0 > 8 || strides.1 > 8 {
            return Err(Error::BadConfig("strides must lie in 1..=8".into()));
        }
        if blocks_per_layer.contains(&0) {
            return Err(Error::BadConfig(
                "every extraction layer needs at least one block".into(),
            ));
        }
        Ok(NetworkConfig {
            spherical,
            base_channels,
            num_classes,
            bn_eps,
            strides,
            blocks_per_layer,
            norm_stats,
        })
    }

    /// Desk-scale default: width 32, two blocks per extraction layer,
    /// strides (2,2). The full-scale shape (width 128/256, blocks 3/3/5/2)
    /// loads the same way, just slower.
    pub fn desk(spherical: SphericalConfig, num_classes: usize) -> Result<Self> {
        NetworkConfig::new(
            spherical,
            32,
            num_classes,
            1e-5,
            (2, 2),
            [2, 2, 2, 2],
            Some(NormStats::semantic_kitti()),
        )
    }

    /// Full-scale shape: the 3/3/5/2 block layout at the given width.
    pub fn full(
        spherical: SphericalConfig,
        base_channels: usize,
        num_classes: usize,
    ) -> Result<Self> {
        NetworkConfig::new(
            spherical,
            base_channels,
            num_classes,
            1e-5,
            (2, 2),
            [3, 3, 5, 2],
            Some(NormStats::semantic_kitti()),
        )
    }

    /// Context block widths: C/2, C, C.
    pub fn context_widths(&self) -> [usize; 3] {
        let c = self.base_channels;
        [c / 2, c, c]
    }

    /// Cumulative (rate, kernel) of the three upsampling convolutions.
    /// Strides (2,2) give rates 2/4/8 with kernels 3/7/15.
    pub fn upsample_stages(&self) -> [((usize, usize), usize); 3] {
        let mut out = [((1, 1), 3); 3];
        let (mut rh, mut rw) = (1usize, 1usize);
        for stage in out.iter_mut() {
            rh *= self.strides.0;
            rw *= self.strides.1;
            *stage = ((rh, rw), kernel_for_rate(rh.max(rw)));
        }
        out
    }

    /// Head widths: 2C then C.
    pub fn head_widths(&self) -> [usize; 2] {
        [2 * self.base_channels, self.base_channels]
    }
}

fn kernel_for_rate(rate: usize) -> usize {
    (2 * rate - 1).max(3)
}

#[derive(Debug, Clone)]
pub struct SfcLayerParams {
    pub kernel: ConvKernel,
    pub bn: BnParams,
}

#[derive(Debug, Clone)]
pub struct SfcBlockParams {
    pub first: SfcLayerParams,
    pub second: SfcLayerParams,
}

/// Downsampling block: a cross-scale conv layer whose centers are the
/// sampled points gathering from the pre-sampling cloud, then a residual
/// block on the downsampled cloud.
#[derive(Debug, Clone)]
pub struct DownsampleBlockParams {
    pub cross: SfcLayerParams,
    pub block: SfcBlockParams,
}

#[derive(Debug, Clone)]
pub struct LinearParams {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl LinearParams {
    pub fn seeded(c_out: usize, c_in: usize, rng: &mut SplitMix64) -> Self {
        let bound = 1.0 / (c_in as f64).sqrt();
        let weight = Mat::from_vec(
            c_out,
            c_in,
            (0..c_out * c_in)
                .map(|_| rng.range_f64(-bound, bound))
                .collect(),
        )
        .unwrap();
        let bias = (0..c_out).map(|_| rng.range_f64(-bound, bound)).collect();
        LinearParams { weight, bias }
    }
}

/// `y = W x + b` per row.
pub fn linear_forward(x: &Mat, p: &LinearParams) -> Result<Mat> {
    if x.cols() != p.weight.cols() {
        return Err(Error::ShapeMismatch(format!(
            "linear input has {} channels, weight expects {}",
            x.cols(),
            p.weight.cols()
        )));
    }
    let mut out = Mat::zeros(x.rows(), p.weight.rows());
    for r in 0..x.rows() {
        let xin = x.row(r);
        let row = out.row_mut(r);
        for o in 0..p.weight.rows() {
            let w = p.weight.row(o);
            let mut s = p.bias[o];
            for i in 0..xin.len() {
                s += w[i] * xin[i];
            }
            row[o] = s;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ExtractionParams {
    pub downsample: Option<DownsampleBlockParams>,
    pub blocks: Vec<SfcBlockParams>,
    pub aux_head: LinearParams,
}

/// Every learned tensor of the network.
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub context: Vec<SfcLayerParams>,
    pub extraction: Vec<ExtractionParams>,
    pub upsample: Vec<SfcLayerParams>,
    pub head: Vec<SfcLayerParams>,
    pub classifier: LinearParams,
}

fn seeded_layer(k: usize, c_out: usize, c_in: usize, rng: &mut SplitMix64) -> SfcLayerParams {
    SfcLayerParams {
        kernel: ConvKernel::seeded(k, c_out, c_in, false, rng),
        bn: BnParams::identity(c_out),
    }
}

fn seeded_block(k: usize, c: usize, rng: &mut SplitMix64) -> SfcBlockParams {
    SfcBlockParams {
        first: seeded_layer(k, c, c, rng),
        second: seeded_layer(k, c, c, rng),
    }
}

impl LayerParams {
    /// Deterministic init: every weight uniform in +-1/sqrt(fan_in), batch
    /// norms at identity.
    pub fn seeded(cfg: &NetworkConfig, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let c = cfg.base_channels;
        let n = cfg.num_classes;
        let widths = cfg.context_widths();
        let mut context = Vec::new();
        let mut c_in = INPUT_CHANNELS;
        for &w in &widths {
            context.push(seeded_layer(3, w, c_in, &mut rng));
            c_in = w;
        }
        let mut extraction = Vec::new();
        for (li, &blocks) in cfg.blocks_per_layer.iter().enumerate() {
            let downsample = (li > 0).then(|| DownsampleBlockParams {
                cross: seeded_layer(3, c, c, &mut rng),
                block: seeded_block(3, c, &mut rng),
            });
            let blocks = (0..blocks).map(|_| seeded_block(3, c, &mut rng)).collect();
            extraction.push(ExtractionParams {
                downsample,
                blocks,
                aux_head: LinearParams::seeded(n, c, &mut rng),
            });
        }
        let upsample = cfg
            .upsample_stages()
            .iter()
            .map(|&(_, k)| seeded_layer(k, c, c, &mut rng))
            .collect();
        let head_in = [5 * c, 2 * c];
        let head = cfg
            .head_widths()
            .iter()
            .zip(head_in)
            .map(|(&w, cin)| seeded_layer(3, w, cin, &mut rng))
            .collect();
        let classifier = LinearParams::seeded(n, c, &mut rng);
        LayerParams {
            context,
            extraction,
            upsample,
            head,
            classifier,
        }
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        self.write_to(&mut f)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        LayerParams::read_from(&mut &bytes[..])
    }

    fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "sfcnet-weights v1")?;
        let sections = self.sections();
        for (name, section) in &sections {
            match section {
                Section::Kernel(k) => writeln!(
                    out,
                    "section {name} kernel {} {} {} {}",
                    k.k(),
                    k.c_out(),
                    k.c_in(),
                    u8::from(k.bias().is_some())
                )?,
                Section::Bn(b) => writeln!(out, "section {name} bn {}", b.channels())?,
                Section::Linear(l) => writeln!(
                    out,
                    "section {name} linear {} {}",
                    l.weight.rows(),
                    l.weight.cols()
                )?,
            }
        }
        writeln!(out, "data")?;
        for (_, section) in &sections {
            match section {
                Section::Kernel(k) => {
                    for w in k.weights() {
                        write_f32s(out, w.data())?;
                    }
                    if let Some(b) = k.bias() {
                        write_f32s(out, b)?;
                    }
                }
                Section::Bn(b) => {
                    write_f32s(out, &b.scale)?;
                    write_f32s(out, &b.shift)?;
                    write_f32s(out, &b.mean)?;
                    write_f32s(out, &b.var)?;
                }
                Section::Linear(l) => {
                    write_f32s(out, l.weight.data())?;
                    write_f32s(out, &l.bias)?;
                }
            }
        }
        Ok(())
    }

    fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let header = read_header_lines(input, "sfcnet-weights v1")?;
        let mut manifest = Vec::new();
        for line in header.iter().skip(1) {
            let rest = line
                .strip_prefix("section ")
                .ok_or_else(|| Error::BadConfig(format!("unexpected header line: {line}")))?;
            let mut it = rest.split_whitespace();
            let name = it
                .next()
                .ok_or_else(|| Error::BadConfig("section line missing name".into()))?
                .to_string();
            let kind = it
                .next()
                .ok_or_else(|| Error::BadConfig("section line missing kind".into()))?
                .to_string();
            let dims: Vec<usize> = it
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::BadConfig(format!("bad section dims in: {line}")))?;
            manifest.push((name, kind, dims));
        }
        let mut cursor = SectionReader {
            manifest,
            at: 0,
            input,
        };
        let params = cursor.read_params()?;
        Ok(params)
    }

    fn sections(&self) -> Vec<(String, Section<'_>)> {
        let mut out = Vec::new();
        fn push_layer<'a>(out: &mut Vec<(String, Section<'a>)>, name: &str, l: &'a SfcLayerParams) {
            out.push((format!("{name}.conv"), Section::Kernel(&l.kernel)));
            out.push((format!("{name}.bn"), Section::Bn(&l.bn)));
        }
        fn push_block<'a>(out: &mut Vec<(String, Section<'a>)>, name: &str, b: &'a SfcBlockParams) {
            push_layer(out, &format!("{name}.a"), &b.first);
            push_layer(out, &format!("{name}.b"), &b.second);
        }
        for (i, l) in self.context.iter().enumerate() {
            push_layer(&mut out, &format!("context.{i}"), l);
        }
        for (li, ext) in self.extraction.iter().enumerate() {
            let prefix = format!("ext{}", li + 1);
            if let Some(ds) = &ext.downsample {
                push_layer(&mut out, &format!("{prefix}.down.cross"), &ds.cross);
                push_block(&mut out, &format!("{prefix}.down.block"), &ds.block);
            }
            for (bi, b) in ext.blocks.iter().enumerate() {
                push_block(&mut out, &format!("{prefix}.block{bi}"), b);
            }
            out.push((
                format!("{prefix}.aux.linear"),
                Section::Linear(&ext.aux_head),
            ));
        }
        for (i, l) in self.upsample.iter().enumerate() {
            push_layer(&mut out, &format!("up{}", i + 2), l);
        }
        for (i, l) in self.head.iter().enumerate() {
            push_layer(&mut out, &format!("head.{i}"), l);
        }
        out.push((
            "classifier.linear".into(),
            Section::Linear(&self.classifier),
        ));
        out
    }
}

enum Section<'a> {
    Kernel(&'a ConvKernel),
    Bn(&'a BnParams),
    Linear(&'a LinearParams),
}

fn write_f32s<W: Write>(out: &mut W, values: &[f64]) -> Result<()> {
    for &v in values {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

struct SectionReader<'a, R: Read> {
    manifest: Vec<(String, String, Vec<usize>)>,
    at: usize,
    input: &'a mut R,
}

impl<R: Read> SectionReader<'_, R> {
    fn peek_name(&self) -> Option<&str> {
        self.manifest.get(self.at).map(|(n, _, _)| n.as_str())
    }

    fn take(&mut self, expect_name: &str, expect_kind: &str) -> Result<Vec<usize>> {
        let Some((name, kind, dims)) = self.manifest.get(self.at) else {
            return Err(Error::BadConfig(format!(
                "weight file ended before section {expect_name}"
            )));
        };
        if name != expect_name || kind != expect_kind {
            return Err(Error::BadConfig(format!(
                "expected section `{expect_name}` ({expect_kind}), found `{name}` ({kind})"
            )));
        }
        let dims = dims.clone();
        self.at += 1;
        Ok(dims)
    }

    fn read_kernel_section(&mut self, name: &str) -> Result<ConvKernel> {
        let dims = self.take(name, "kernel")?;
        if dims.len() != 4 {
            return Err(Error::BadConfig(format!("section {name}: bad kernel dims")));
        }
        let (k, c_out, c_in, has_bias) = (dims[0], dims[1], dims[2], dims[3] != 0);
        let mut weights = Vec::with_capacity(k * k);
        for _ in 0..k * k {
            weights.push(Mat::from_vec(
                c_out,
                c_in,
                read_f32_values(self.input, c_out * c_in)?,
            )?);
        }
        let bias = if has_bias {
            Some(read_f32_values(self.input, c_out)?)
        } else {
            None
        };
        ConvKernel::new(k, weights, bias)
    }

    fn read_bn_section(&mut self, name: &str) -> Result<BnParams> {
        let dims = self.take(name, "bn")?;
        if dims.len() != 1 {
            return Err(Error::BadConfig(format!("section {name}: bad bn dims")));
        }
        let c = dims[0];
        BnParams::new(
            read_f32_values(self.input, c)?,
            read_f32_values(self.input, c)?,
            read_f32_values(self.input, c)?,
            read_f32_values(self.input, c)?,
        )
    }

    fn read_linear_section(&mut self, name: &str) -> Result<LinearParams> {
        let dims = self.take(name, "linear")?;
        if dims.len() != 2 {
            return Err(Error::BadConfig(format!("section {name}: bad linear dims")));
        }
        let (c_out, c_in) = (dims[0], dims[1]);
        Ok(LinearParams {
            weight: Mat::from_vec(c_out, c_in, read_f32_values(self.input, c_out * c_in)?)?,
            bias: read_f32_values(self.input, c_out)?,
        })
    }

    fn read_layer(&mut self, prefix: &str) -> Result<SfcLayerParams> {
        Ok(SfcLayerParams {
            kernel: self.read_kernel_section(&format!("{prefix}.conv"))?,
            bn: self.read_bn_section(&format!("{prefix}.bn"))?,
        })
    }

    fn read_block(&mut self, prefix: &str) -> Result<SfcBlockParams> {
        Ok(SfcBlockParams {
            first: self.read_layer(&format!("{prefix}.a"))?,
            second: self.read_layer(&format!("{prefix}.b"))?,
        })
    }

    fn read_params(&mut self) -> Result<LayerParams> {
        let mut context = Vec::new();
        let mut i = 0;
        while self.peek_name() == Some(&format!("context.{i}.conv")[..]) {
            context.push(self.read_layer(&format!("context.{i}"))?);
            i += 1;
        }
        let mut extraction = Vec::new();
        for li in 1..=4 {
            let prefix = format!("ext{li}");
            let downsample = if li > 1 {
                Some(DownsampleBlockParams {
                    cross: self.read_layer(&format!("{prefix}.down.cross"))?,
                    block: self.read_block(&format!("{prefix}.down.block"))?,
                })
            } else {
                None
            };
            let mut blocks = Vec::new();
            let mut bi = 0;
            while self.peek_name() == Some(&format!("{prefix}.block{bi}.a.conv")[..]) {
                blocks.push(self.read_block(&format!("{prefix}.block{bi}"))?);
                bi += 1;
            }
            let aux_head = self.read_linear_section(&format!("{prefix}.aux.linear"))?;
            extraction.push(ExtractionParams {
                downsample,
                blocks,
                aux_head,
            });
        }
        let mut upsample = Vec::new();
        for stage in 2..=4 {
            upsample.push(self.read_layer(&format!("up{stage}"))?);
        }
        let mut head = Vec::new();
        let mut hi = 0;
        while self.peek_name() == Some(&format!("head.{hi}.conv")[..]) {
            head.push(self.read_layer(&format!("head.{hi}"))?);
            hi += 1;
        }
        let classifier = self.read_linear_section("classifier.linear")?;
        if self.at != self.manifest.len() {
            return Err(Error::BadConfig(format!(
                "{} trailing sections in weight file",
                self.manifest.len() - self.at
            )));
        }
        Ok(LayerParams {
            context,
            extraction,
            upsample,
            head,
            classifier,
        })
    }
}

/// Immutable per-scale structure: coordinates, grid, key index, and the
/// all-points kernel-3 gather plan every conv layer at this scale shares.
#[derive(Debug)]
pub struct FrustumScene {
    xyz: Vec<[f64; 3]>,
    grid: FrustumGrid,
    index: HashIndex,
    plan: GatherPlan,
    wrap: bool,
}

impl FrustumScene {
    pub fn build(xyz: Vec<[f64; 3]>, grid: FrustumGrid, wrap: bool) -> Result<Self> {
        if xyz.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates for a {}-point grid",
                xyz.len(),
                grid.len()
            )));
        }
        let index = build_hash_index(&grid)?;
        let centers: Vec<u32> = (0..grid.len() as u32).collect();
        let plan = gather_neighbors(&centers, &grid, &index, 3, wrap)?;
        Ok(FrustumScene {
            xyz,
            grid,
            index,
            plan,
            wrap,
        })
    }

    pub fn from_cloud(cloud: &PointCloud, config: &SphericalConfig) -> Result<Self> {
        let projected = project_cloud(cloud, config)?;
        let grid = build_frustum_grid(&projected, config.height, config.width)?;
        FrustumScene::build(cloud.xyz().to_vec(), grid, config.wrap_azimuth)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn grid(&self) -> &FrustumGrid {
        &self.grid
    }

    pub fn index(&self) -> &HashIndex {
        &self.index
    }

    pub fn xyz(&self) -> &[[f64; 3]] {
        &self.xyz
    }

    pub fn plan(&self) -> &GatherPlan {
        &self.plan
    }

    pub fn wrap(&self) -> bool {
        self.wrap
    }
}

/// Conv, batch norm, activation.
pub fn sfc_layer_forward(
    scene: &FrustumScene,
    features: &Mat,
    params: &SfcLayerParams,
    eps: f64,
) -> Result<Mat> {
    let x = sfc_forward(features, &scene.plan, &params.kernel)?;
    let mut x = bn_inference(&x, &params.bn, eps)?;
    hardswish_in_place(&mut x);
    Ok(x)
}

/// Two conv layers plus the residual connection.
pub fn sfc_block_forward(
    scene: &FrustumScene,
    features: &Mat,
    params: &SfcBlockParams,
    eps: f64,
) -> Result<Mat> {
    let y = sfc_layer_forward(scene, features, &params.first, eps)?;
    let mut y = sfc_layer_forward(scene, &y, &params.second, eps)?;
    if y.rows() != features.rows() || y.cols() != features.cols() {
        return Err(Error::ShapeMismatch(format!(
            "residual shapes differ: {}x{} vs {}x{}",
            y.rows(),
            y.cols(),
            features.rows(),
            features.cols()
        )));
    }
    for (a, b) in y.data_mut().iter_mut().zip(features.data()) {
        *a += b;
    }
    Ok(y)
}

/// Downsample, then aggregate: the sampled points act as centers on the
/// pre-sampling grid for the first conv (cross-scale), the residual block
/// then runs on the downsampled cloud. The residual is carried from the
/// cross-scale layer's output.
pub fn downsample_block_forward(
    scene: &FrustumScene,
    features: &Mat,
    params: &DownsampleBlockParams,
    strides: (usize, usize),
    eps: f64,
) -> Result<(FrustumScene, Mat, SampledCloud)> {
    let sampled = f2ps(&scene.grid, &scene.index, &scene.xyz, strides)?;
    let cross_plan = gather_neighbors(
        sampled.parent_indices(),
        &scene.grid,
        &scene.index,
        params.cross.kernel.k(),
        scene.wrap,
    )?;
    let y = sfc_forward(features, &cross_plan, &params.cross.kernel)?;
    let mut y = bn_inference(&y, &params.cross.bn, eps)?;
    hardswish_in_place(&mut y);

    let grid = rebuild_downsampled_grid(&sampled);
    let xyz = sampled
        .parent_indices()
        .iter()
        .map(|&k| scene.xyz[k as usize])
        .collect();
    let down_scene = FrustumScene::build(xyz, grid, scene.wrap)?;
    let out = sfc_block_forward(&down_scene, &y, &params.block, eps)?;
    Ok((down_scene, out, sampled))
}

/// Full network output: final logits plus the four per-extraction-layer
/// auxiliary logit tables used by the multi-layer loss.
#[derive(Debug, Clone)]
pub struct NetworkOutput {
    pub logits: Mat,
    pub aux_logits: Vec<Mat>,
}

/// Run the network. Exactly one logit row per input point, at every
/// invocation.
pub fn sfcnet_forward(
    cloud: &PointCloud,
    params: &LayerParams,
    cfg: &NetworkConfig,
) -> Result<NetworkOutput> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let eps = cfg.bn_eps;
    let features = match &cfg.norm_stats {
        Some(stats) => normalize_features(cloud.features(), stats),
        None => cloud.features().clone(),
    };
    let projected = project_cloud(cloud, &cfg.spherical)?;
    let grid = build_frustum_grid(&projected, cfg.spherical.height, cfg.spherical.width)?;
    let scene0 = FrustumScene::build(cloud.xyz().to_vec(), grid, cfg.spherical.wrap_azimuth)?;

    let mut x = features;
    for layer in &params.context {
        x = sfc_layer_forward(&scene0, &x, layer, eps)?;
    }
    let context_out = x.clone();
    for block in &params.extraction[0].blocks {
        x = sfc_block_forward(&scene0, &x, block, eps)?;
    }
    let layer1_out = x.clone();

    // Extraction layers 2..4, each on its own downsampled scene.
    let mut deep_scenes: Vec<FrustumScene> = Vec::new();
    let mut deep_features: Vec<Mat> = Vec::new();
    for li in 1..params.extraction.len() {
        let ext = &params.extraction[li];
        let ds = ext.downsample.as_ref().ok_or_else(|| {
            Error::ShapeMismatch(format!("extraction layer {} missing downsample", li + 1))
        })?;
        let (scene, mut y, _) = {
            let parent = if li == 1 {
                &scene0
            } else {
                &deep_scenes[li - 2]
            };
            downsample_block_forward(
                parent,
                if li == 1 {
                    &layer1_out
                } else {
                    &deep_features[li - 2]
                },
                ds,
                cfg.strides,
                eps,
            )?
        };
        for block in &ext.blocks {
            y = sfc_block_forward(&scene, &y, block, eps)?;
        }
        deep_scenes.push(scene);
        deep_features.push(y);
    }

    // Upsample the deep features back onto the original points.
    let stages = cfg.upsample_stages();
    let mut upsampled: Vec<Mat> = Vec::new();
    for (i, &(rate, kernel_size)) in stages.iter().enumerate() {
        let layer = &params.upsample[i];
        if layer.kernel.k() != kernel_size {
            return Err(Error::ShapeMismatch(format!(
                "upsampling stage {} kernel is {}, rate {:?} requires {}",
                i + 2,
                layer.kernel.k(),
                rate,
                kernel_size
            )));
        }
        let y = upsample_sfc_forward(
            &deep_features[i],
            deep_scenes[i].grid(),
            deep_scenes[i].index(),
            &projected,
            rate,
            &layer.kernel,
            cfg.spherical.wrap_azimuth,
            cfg.spherical.width,
        )?;
        let mut y = bn_inference(&y, &layer.bn, eps)?;
        hardswish_in_place(&mut y);
        upsampled.push(y);
    }

    let aux_logits = vec![
        linear_forward(&layer1_out, &params.extraction[0].aux_head)?,
        linear_forward(&upsampled[0], &params.extraction[1].aux_head)?,
        linear_forward(&upsampled[1], &params.extraction[2].aux_head)?,
        linear_forward(&upsampled[2], &params.extraction[3].aux_head)?,
    ];

    let mut x = Mat::hcat(&[
        &context_out,
        &layer1_out,
        &upsampled[0],
        &upsampled[1],
        &upsampled[2],
    ])?;
    for layer in &params.head {
        x = sfc_layer_forward(&scene0, &x, layer, eps)?;
    }
    let logits = linear_forward(&x, &params.classifier)?;
    Ok(NetworkOutput { logits, aux_logits })
}
