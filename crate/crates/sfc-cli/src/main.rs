//! `sfc` — scan-level workflows over the spherical frustum toolkit.
//!
//! Every subcommand emits line-delimited JSON records: one `run` header,
//! one record per scan (failures reported per record without aborting the
//! batch), and a final `summary`. The exit code is zero exactly when every
//! per-scan record succeeded. All randomness funnels through `--seed`, so
//! reports are reproducible apart from the `*_ms` timing fields.

mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use report::{ms_since, Report};
use sfc_core::config::{read_config, FileConfig};
use sfc_core::frustum::build_frustum_grid;
use sfc_core::geometry::{project_cloud, PointCloud};
use sfc_core::hashindex::{build_hash_index, visit_frustum};
use sfc_core::io::{
    gen_synthetic_scene, read_labels, read_scan, read_scene_spec, write_predictions, write_scan,
};
use sfc_core::metrics::{
    drop_stats_projected, knn_restore, miou, partition_by_cell, per_class_drop, ConfusionMatrix,
};
use sfc_core::network::{sfcnet_forward, LayerParams};
use sfc_core::rng::SplitMix64;
use sfc_core::sampling::{f2ps, fps, rebuild_downsampled_grid, SeedPolicy};

#[derive(Parser)]
#[command(name = "sfc", version, about = "Spherical frustum point-cloud toolkit")]
struct Cli {
    /// Seed for every randomized component.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for batch subcommands (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Write the report to this file instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Config file (key = value). Falls back to $SFC_CONFIG, then to the
    /// built-in 64-beam defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the frustum grid and key index; report structure statistics
    /// and losslessness checks.
    Index { scans: Vec<PathBuf> },
    /// Preservation statistics of conventional projection, per resolution.
    Stats {
        scans: Vec<PathBuf>,
        /// Label file (single scan) or directory of `<stem>.label` files.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Comma-separated HxW list.
        #[arg(long, default_value = "64x1800,64x2048,64x4096")]
        resolutions: String,
    },
    /// Downsample a scan by windowed frustum sampling.
    Sample {
        scan: PathBuf,
        /// Vertical,horizontal strides.
        #[arg(long, default_value = "2,2")]
        strides: String,
        /// Where to write the sampled cloud (default: scan path with
        /// .sampled.bin).
        #[arg(long)]
        out_cloud: Option<PathBuf>,
    },
    /// Time windowed frustum sampling against plain farthest point
    /// sampling on synthetic clouds.
    BenchSampling {
        #[arg(long, default_value = "20000,40000,80000,160000")]
        sizes: String,
        #[arg(long, default_value = "2,2")]
        strides: String,
        /// Skip the plain farthest-point-sampling column (it dominates the
        /// runtime at large sizes).
        #[arg(long)]
        skip_fps: bool,
    },
    /// Run the segmentation network and write per-point predictions.
    Forward {
        scan: PathBuf,
        /// Network weight file; seeded init when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Prediction output path (default: scan path with .pred.label).
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Quantify what conventional projection loses: project, drop, restore
    /// by nearest-neighbor voting, and score against full predictions.
    Baseline {
        scan: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Full per-point predictions; ground-truth labels stand in when
        /// absent, isolating pure projection loss.
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        knn: usize,
        #[arg(long, default_value_t = 5)]
        window: usize,
        /// Ground-truth class excluded from scoring (negative = none).
        #[arg(long, default_value_t = 0)]
        ignore_class: i64,
    },
    /// Generate a synthetic scan + labels from a scene description.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        /// Output prefix; writes <prefix>.bin and <prefix>.label.
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Confusion matrix and mean IoU over directories of prediction and
    /// ground-truth label files.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Class count (default: inferred from the data).
        #[arg(long)]
        classes: Option<usize>,
        /// Ground-truth class excluded from scoring (negative = none).
        #[arg(long, default_value_t = 0)]
        ignore_class: i64,
    },
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .ok();
    }
    match run(&cli) {
        Ok(true) => std::process::ExitCode::SUCCESS,
        Ok(false) => std::process::ExitCode::FAILURE,
        Err(err) => {
            // Malformed input: one diagnostic record, nonzero exit.
            let diag = json!({ "record": "error", "message": format!("{err:#}") });
            eprintln!("{diag}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<FileConfig> {
    if let Some(path) = &cli.config {
        return read_config(path).with_context(|| format!("config {}", path.display()));
    }
    if let Ok(path) = std::env::var("SFC_CONFIG") {
        return read_config(Path::new(&path)).with_context(|| format!("config {path}"));
    }
    Ok(FileConfig::default_beam64())
}

fn config_echo(cfg: &FileConfig) -> Value {
    json!({
        "height": cfg.spherical.height,
        "width": cfg.spherical.width,
        "fov_up_deg": cfg.spherical.fov_up.to_degrees(),
        "fov_down_deg": cfg.spherical.fov_down.to_degrees(),
        "wrap_azimuth": cfg.spherical.wrap_azimuth,
        "base_channels": cfg.base_channels,
        "num_classes": cfg.num_classes,
        "bn_eps": cfg.bn_eps,
        "stride_h": cfg.strides.0,
        "stride_w": cfg.strides.1,
        "blocks": cfg.blocks_per_layer,
        "normalize": cfg.normalize.is_some(),
    })
}

fn run(cli: &Cli) -> Result<bool> {
    let start = Instant::now();
    let cfg = load_config(cli)?;
    let mut report = match &cli.out {
        Some(path) => Report::to_file(path)?,
        None => Report::to_stdout(),
    };
    report.emit(json!({
        "record": "run",
        "command": command_name(&cli.command),
        "seed": cli.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config_echo(&cfg),
    }))?;

    match &cli.command {
        Command::Index { scans } => {
            if scans.is_empty() {
                return Err(anyhow!("no scans given"));
            }
            run_per_scan(&mut report, scans, |scan| cmd_index(scan, &cfg))?;
        }
        Command::Stats {
            scans,
            labels,
            resolutions,
        } => {
            if scans.is_empty() {
                return Err(anyhow!("no scans given"));
            }
            let resolutions = parse_resolutions(resolutions)?;
            run_per_scan(&mut report, scans, |scan| {
                cmd_stats(scan, labels.as_deref(), &resolutions, &cfg)
            })?;
        }
        Command::Sample {
            scan,
            strides,
            out_cloud,
        } => {
            let strides = parse_pair(strides).context("--strides")?;
            let record = cmd_sample(scan, strides, out_cloud.as_deref(), &cfg)?;
            report.emit_scan(record, true)?;
        }
        Command::BenchSampling {
            sizes,
            strides,
            skip_fps,
        } => {
            let sizes = parse_sizes(sizes)?;
            let strides = parse_pair(strides).context("--strides")?;
            for &n in &sizes {
                let record = cmd_bench_one(n, strides, cli.seed, *skip_fps, &cfg)?;
                report.emit_scan(record, true)?;
            }
        }
        Command::Forward {
            scan,
            weights,
            predictions,
        } => {
            let record = cmd_forward(
                scan,
                weights.as_deref(),
                predictions.as_deref(),
                cli.seed,
                &cfg,
            )?;
            report.emit_scan(record, true)?;
        }
        Command::Baseline {
            scan,
            labels,
            pred,
            knn,
            window,
            ignore_class,
        } => {
            let record = cmd_baseline(
                scan,
                labels,
                pred.as_deref(),
                *knn,
                *window,
                ignore(*ignore_class),
                &cfg,
            )?;
            report.emit_scan(record, true)?;
        }
        Command::Synth { spec, out_prefix } => {
            let record = cmd_synth(spec, out_prefix, cli.seed)?;
            report.emit_scan(record, true)?;
        }
        Command::Eval {
            pred,
            gt,
            classes,
            ignore_class,
        } => {
            cmd_eval(&mut report, pred, gt, *classes, ignore(*ignore_class))?;
        }
    }
    report.finish(ms_since(start))
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Index { .. } => "index",
        Command::Stats { .. } => "stats",
        Command::Sample { .. } => "sample",
        Command::BenchSampling { .. } => "bench-sampling",
        Command::Forward { .. } => "forward",
        Command::Baseline { .. } => "baseline",
        Command::Synth { .. } => "synth",
        Command::Eval { .. } => "eval",
    }
}

fn ignore(flag: i64) -> Option<usize> {
    (flag >= 0).then_some(flag as usize)
}

/// Process scans in parallel, emit records in input order, never abort the
/// batch on a single failure.
fn run_per_scan<F>(report: &mut Report, scans: &[PathBuf], f: F) -> Result<()>
where
    F: Fn(&Path) -> Result<Value> + Sync,
{
    let results: Vec<(Value, bool)> = scans
        .par_iter()
        .map(|scan| match f(scan) {
            Ok(record) => (record, true),
            Err(err) => (
                json!({
                    "record": "scan",
                    "path": scan.display().to_string(),
                    "error": format!("{err:#}"),
                }),
                false,
            ),
        })
        .collect();
    for (record, succeeded) in results {
        report.emit_scan(record, succeeded)?;
    }
    Ok(())
}

fn parse_resolutions(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|tok| {
            let (h, w) = tok
                .split_once('x')
                .ok_or_else(|| anyhow!("bad resolution `{tok}`, expected HxW"))?;
            Ok((h.trim().parse()?, w.trim().parse()?))
        })
        .collect()
}

fn parse_pair(text: &str) -> Result<(usize, usize)> {
    let (a, b) = text
        .split_once(',')
        .ok_or_else(|| anyhow!("expected two comma-separated integers, got `{text}`"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn parse_sizes(text: &str) -> Result<Vec<usize>> {
    text.split(',').map(|tok| Ok(tok.trim().parse()?)).collect()
}

fn labels_for(scan: &Path, labels: &Path) -> PathBuf {
    if labels.is_dir() {
        let stem = scan.file_stem().unwrap_or_default();
        labels.join(Path::new(stem).with_extension("label"))
    } else {
        labels.to_path_buf()
    }
}

fn cmd_index(scan: &Path, cfg: &FileConfig) -> Result<Value> {
    let start = Instant::now();
    let cloud = read_scan(scan)?;
    let projected = project_cloud(&cloud, &cfg.spherical)?;
    let grid = build_frustum_grid(&projected, cfg.spherical.height, cfg.spherical.width)?;
    let index = build_hash_index(&grid)?;
    let n = cloud.len();

    let counts_cover = grid.count_sum() == n as u64;
    let mut retrievable = true;
    for k in 0..n as u32 {
        let (u, v) = grid.cell(k as usize);
        if index.query(u, v, grid.frustum_index(k as usize)) != Some(k) {
            retrievable = false;
            break;
        }
    }
    let mut visited: Vec<u32> = Vec::with_capacity(n);
    for ((u, v), _) in grid.cells_sorted() {
        visited.extend(visit_frustum(&index, &grid, u, v)?);
    }
    visited.sort_unstable();
    let visit_cover = visited == (0..n as u32).collect::<Vec<_>>();

    Ok(json!({
        "record": "scan",
        "path": scan.display().to_string(),
        "n": n,
        "occupied_cells": grid.occupied_cells(),
        "max_frustum": if n == 0 { 0 } else { grid.max_frustum_size()? },
        "counts_cover_cloud": counts_cover,
        "all_points_retrievable": retrievable,
        "visiting_covers_cloud": visit_cover,
        "elapsed_ms": ms_since(start),
    }))
}

fn cmd_stats(
    scan: &Path,
    labels: Option<&Path>,
    resolutions: &[(usize, usize)],
    cfg: &FileConfig,
) -> Result<Value> {
    let start = Instant::now();
    let cloud = read_scan(scan)?;
    let labels = match labels {
        Some(path) => Some(read_labels(&labels_for(scan, path), cloud.len())?),
        None => None,
    };
    let mut per_resolution = Vec::new();
    for &(height, width) in resolutions {
        let spherical = cfg.spherical.with_resolution(height, width)?;
        let projected = project_cloud(&cloud, &spherical)?;
        let stats = drop_stats_projected(&projected);
        let mut entry = json!({
            "height": height,
            "width": width,
            "n": stats.total,
            "preserved": stats.preserved,
            "fraction": stats.fraction,
        });
        if let Some(labels) = &labels {
            let partition = partition_by_cell(&projected);
            let per_class: Vec<Value> = per_class_drop(&partition, labels)
                .into_iter()
                .map(|(class, total, dropped)| {
                    json!({
                        "class": class,
                        "total": total,
                        "dropped": dropped,
                        "drop_rate": dropped as f64 / total as f64,
                    })
                })
                .collect();
            entry["per_class"] = Value::Array(per_class);
        }
        per_resolution.push(entry);
    }
    Ok(json!({
        "record": "scan",
        "path": scan.display().to_string(),
        "n": cloud.len(),
        "resolutions": per_resolution,
        "elapsed_ms": ms_since(start),
    }))
}

fn cmd_sample(
    scan: &Path,
    strides: (usize, usize),
    out_cloud: Option<&Path>,
    cfg: &FileConfig,
) -> Result<Value> {
    let cloud = read_scan(scan)?;
    let projected = project_cloud(&cloud, &cfg.spherical)?;
    let grid = build_frustum_grid(&projected, cfg.spherical.height, cfg.spherical.width)?;
    let index = build_hash_index(&grid)?;
    let start = Instant::now();
    let sampled = f2ps(&grid, &index, cloud.xyz(), strides)?;
    let sample_ms = ms_since(start);
    let rebuilt = rebuild_downsampled_grid(&sampled);
    let (h2, w2) = sampled.grid_size();

    let out_path = match out_cloud {
        Some(p) => p.to_path_buf(),
        None => scan.with_extension("sampled.bin"),
    };
    let xyz: Vec<[f64; 3]> = sampled
        .parent_indices()
        .iter()
        .map(|&k| cloud.xyz()[k as usize])
        .collect();
    let intensity: Vec<f64> = sampled
        .parent_indices()
        .iter()
        .map(|&k| cloud.intensity()[k as usize])
        .collect();
    write_scan(&out_path, &PointCloud::new(xyz, intensity, None)?)?;
    let written = Some(out_path.display().to_string());
    Ok(json!({
        "record": "scan",
        "path": scan.display().to_string(),
        "n": cloud.len(),
        "sampled": sampled.len(),
        "stride_h": strides.0,
        "stride_w": strides.1,
        "grid_height": h2,
        "grid_width": w2,
        "occupied_cells": rebuilt.occupied_cells(),
        "out_cloud": written,
        "elapsed_ms": sample_ms,
    }))
}

/// LiDAR-like synthetic cloud with exactly `n` points.
fn bench_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = SplitMix64::new(seed);
    let mut xyz = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for _ in 0..n {
        let az = rng.range_f64(-std::f64::consts::PI + 1e-9, std::f64::consts::PI);
        let elev = rng.range_f64((-24.5f64).to_radians(), 2.5f64.to_radians());
        let r = rng.range_f64(2.0, 60.0);
        xyz.push([
            r * elev.cos() * az.cos(),
            r * elev.cos() * az.sin(),
            r * elev.sin(),
        ]);
        intensity.push(rng.next_f64());
    }
    PointCloud::new(xyz, intensity, None).unwrap()
}

fn cmd_bench_one(
    n: usize,
    strides: (usize, usize),
    seed: u64,
    skip_fps: bool,
    cfg: &FileConfig,
) -> Result<Value> {
    let cloud = bench_cloud(n, seed ^ n as u64);
    let projected = project_cloud(&cloud, &cfg.spherical)?;
    let grid = build_frustum_grid(&projected, cfg.spherical.height, cfg.spherical.width)?;
    let index = build_hash_index(&grid)?;
    let target = n.div_ceil(strides.0 * strides.1);

    // Best of three for the windowed pass; it is fast enough to repeat.
    let mut windowed_ms = f64::INFINITY;
    let mut sampled_len = 0;
    for _ in 0..3 {
        let start = Instant::now();
        let sampled = f2ps(&grid, &index, cloud.xyz(), strides)?;
        windowed_ms = windowed_ms.min(ms_since(start));
        sampled_len = sampled.len();
    }
    let plain_ms = if skip_fps {
        None
    } else {
        let start = Instant::now();
        let picks = fps(cloud.xyz(), target, SeedPolicy::First)?;
        let elapsed = ms_since(start);
        assert_eq!(picks.len(), target);
        Some(elapsed)
    };
    Ok(json!({
        "record": "bench",
        "n": n,
        "stride_h": strides.0,
        "stride_w": strides.1,
        "sampled": sampled_len,
        "plain_fps_target": target,
        "f2ps_ms": windowed_ms,
        "fps_ms": plain_ms,
    }))
}

fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, &x) in row.iter().enumerate() {
        if x > best_value {
            best_value = x;
            best = i;
        }
    }
    best
}

fn cmd_forward(
    scan: &Path,
    weights: Option<&Path>,
    predictions: Option<&Path>,
    seed: u64,
    cfg: &FileConfig,
) -> Result<Value> {
    let start = Instant::now();
    let cloud = read_scan(scan)?;
    let net_cfg = cfg.network_config()?;
    let (params, params_source) = match weights {
        Some(path) => (
            LayerParams::read_file(path).with_context(|| format!("weights {}", path.display()))?,
            path.display().to_string(),
        ),
        None => (
            LayerParams::seeded(&net_cfg, seed),
            format!("seeded:{seed}"),
        ),
    };
    let output = sfcnet_forward(&cloud, &params, &net_cfg)?;
    let predicted: Vec<u16> = (0..output.logits.rows())
        .map(|r| argmax_row(output.logits.row(r)) as u16)
        .collect();
    let out_path = match predictions {
        Some(p) => p.to_path_buf(),
        None => scan.with_extension("pred.label"),
    };
    write_predictions(&out_path, &predicted)?;
    Ok(json!({
        "record": "scan",
        "path": scan.display().to_string(),
        "n": cloud.len(),
        "logit_rows": output.logits.rows(),
        "classes": output.logits.cols(),
        "aux_layers": output.aux_logits.len(),
        "params": params_source,
        "predictions": out_path.display().to_string(),
        "elapsed_ms": ms_since(start),
    }))
}

fn cmd_baseline(
    scan: &Path,
    labels_path: &Path,
    pred: Option<&Path>,
    knn: usize,
    window: usize,
    ignore_class: Option<usize>,
    cfg: &FileConfig,
) -> Result<Value> {
    let start = Instant::now();
    let cloud = read_scan(scan)?;
    let labels = read_labels(&labels_for(scan, labels_path), cloud.len())?;
    let full_pred = match pred {
        Some(path) => read_labels(path, cloud.len())?,
        None => labels.clone(),
    };
    let projected = project_cloud(&cloud, &cfg.spherical)?;
    let partition = partition_by_cell(&projected);
    let kept_predictions: Vec<u16> = partition
        .kept
        .iter()
        .map(|&k| full_pred[k as usize])
        .collect();
    let restored = knn_restore(
        &partition.kept,
        &kept_predictions,
        &partition.dropped,
        &projected,
        knn,
        window,
        cfg.spherical.wrap_azimuth,
        cfg.spherical.width,
    )?;

    let classes = labels
        .iter()
        .chain(full_pred.iter())
        .map(|&c| c as usize + 1)
        .max()
        .unwrap_or(2)
        .max(2);
    let mut cm_restored = ConfusionMatrix::new(classes, ignore_class);
    cm_restored.record_all(&labels, &restored)?;
    let mut cm_direct = ConfusionMatrix::new(classes, ignore_class);
    cm_direct.record_all(&labels, &full_pred)?;
    let restored_report = miou(&cm_restored);
    let direct_report = miou(&cm_direct);

    Ok(json!({
        "record": "scan",
        "path": scan.display().to_string(),
        "n": cloud.len(),
        "kept": partition.kept.len(),
        "dropped": partition.dropped.len(),
        "knn": knn,
        "window": window,
        "pred_source": pred.map_or("labels".to_string(), |p| p.display().to_string()),
        "restored_miou_pct": restored_report.mean * 100.0,
        "frustum_miou_pct": direct_report.mean * 100.0,
        "elapsed_ms": ms_since(start),
    }))
}

fn cmd_synth(spec: &Path, out_prefix: &Path, seed: u64) -> Result<Value> {
    let start = Instant::now();
    let scene = read_scene_spec(spec)?;
    let cloud = gen_synthetic_scene(&scene.primitives, &scene.beams, seed)?;
    let bin_path = PathBuf::from(format!("{}.bin", out_prefix.display()));
    let label_path = PathBuf::from(format!("{}.label", out_prefix.display()));
    if let Some(parent) = bin_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_scan(&bin_path, &cloud)?;
    write_predictions(&label_path, cloud.labels().unwrap())?;
    let mut class_counts: std::collections::BTreeMap<u16, usize> = Default::default();
    for &l in cloud.labels().unwrap() {
        *class_counts.entry(l).or_insert(0) += 1;
    }
    Ok(json!({
        "record": "scan",
        "path": spec.display().to_string(),
        "n": cloud.len(),
        "beams_rows": scene.beams.rows,
        "beams_cols": scene.beams.cols,
        "classes": class_counts
            .iter()
            .map(|(c, n)| json!({"class": c, "points": n}))
            .collect::<Vec<_>>(),
        "scan": bin_path.display().to_string(),
        "labels": label_path.display().to_string(),
        "elapsed_ms": ms_since(start),
    }))
}

fn label_file_len(path: &Path) -> Result<usize> {
    let bytes = std::fs::metadata(path)?.len();
    Ok((bytes / 4) as usize)
}

fn cmd_eval(
    report: &mut Report,
    pred_dir: &Path,
    gt_dir: &Path,
    classes: Option<usize>,
    ignore_class: Option<usize>,
) -> Result<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(pred_dir)
        .with_context(|| format!("prediction dir {}", pred_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "label"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(anyhow!("no .label files in {}", pred_dir.display()));
    }

    // First pass to infer the class count when not given.
    let mut pairs = Vec::new();
    let mut max_class = 0u16;
    for pred_path in &files {
        let name = pred_path.file_name().unwrap();
        let gt_path = gt_dir.join(name);
        let loaded = (|| -> Result<(Vec<u16>, Vec<u16>)> {
            let n = label_file_len(&gt_path)?;
            let gt = read_labels(&gt_path, n)?;
            let pred = read_labels(pred_path, n)?;
            Ok((gt, pred))
        })();
        if let Ok((gt, pred)) = &loaded {
            max_class = max_class
                .max(gt.iter().copied().max().unwrap_or(0))
                .max(pred.iter().copied().max().unwrap_or(0));
        }
        pairs.push((pred_path.clone(), loaded));
    }
    let classes = classes.unwrap_or(max_class as usize + 1).max(2);

    let mut merged = ConfusionMatrix::new(classes, ignore_class);
    for (path, loaded) in pairs {
        match loaded {
            Err(err) => {
                report.emit_scan(
                    json!({
                        "record": "scan",
                        "path": path.display().to_string(),
                        "error": format!("{err:#}"),
                    }),
                    false,
                )?;
            }
            Ok((gt, pred)) => {
                let mut cm = ConfusionMatrix::new(classes, ignore_class);
                cm.record_all(&gt, &pred)?;
                merged.merge(&cm);
                let scan_report = miou(&cm);
                report.emit_scan(
                    json!({
                        "record": "scan",
                        "path": path.display().to_string(),
                        "n": gt.len(),
                        "evaluated": cm.total(),
                        "miou_pct": scan_report.mean * 100.0,
                        "per_class_iou_pct": scan_report
                            .per_class
                            .iter()
                            .map(|iou| iou.map(|x| x * 100.0))
                            .collect::<Vec<_>>(),
                    }),
                    true,
                )?;
            }
        }
    }
    let overall = miou(&merged);
    report.emit(json!({
        "record": "eval",
        "classes": classes,
        "evaluated": merged.total(),
        "miou_pct": overall.mean * 100.0,
        "per_class_iou_pct": overall
            .per_class
            .iter()
            .map(|iou| iou.map(|x| x * 100.0))
            .collect::<Vec<_>>(),
    }))?;
    Ok(())
}
