//! End-to-end checks of the `sfc` binary: record shapes, exit codes, batch
//! behavior on partial failure, and the config fallback chain.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn sfc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sfc"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sfc_cli_{}_{name}", std::process::id()));
    fs::remove_dir_all(&dir).ok();
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn parse_records(output: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&output.stdout)
        .lines()
        .map(|line| serde_json::from_str(line).expect("every output line is JSON"))
        .collect()
}

fn record_of<'a>(records: &'a [Value], kind: &str) -> &'a Value {
    records
        .iter()
        .find(|r| r["record"] == kind)
        .unwrap_or_else(|| panic!("no `{kind}` record"))
}

/// Two known point records, 32 bytes.
fn write_two_point_fixture(path: &Path) {
    let mut bytes = Vec::new();
    for v in [1.0f32, 0.0, 0.0, 0.5, 5.0, 1.0, -0.5, 0.25] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).unwrap();
}

#[test]
fn index_reports_two_point_fixture() {
    let dir = workdir("index2");
    let scan = dir.join("two.bin");
    write_two_point_fixture(&scan);
    let output = sfc().arg("index").arg(&scan).output().unwrap();
    assert!(output.status.success());
    let records = parse_records(&output);
    let scan_record = record_of(&records, "scan");
    assert_eq!(scan_record["n"], 2);
    assert_eq!(scan_record["counts_cover_cloud"], true);
    assert_eq!(scan_record["all_points_retrievable"], true);
    assert_eq!(scan_record["visiting_covers_cloud"], true);
    assert_eq!(record_of(&records, "summary")["failed"], 0);
}

#[test]
fn batch_continues_past_bad_scan() {
    let dir = workdir("batch");
    let good = dir.join("good.bin");
    write_two_point_fixture(&good);
    let bad = dir.join("bad.bin");
    fs::write(&bad, vec![0u8; 10]).unwrap(); // not a whole record
    let output = sfc().arg("index").arg(&bad).arg(&good).output().unwrap();
    assert!(
        !output.status.success(),
        "partial failure must exit nonzero"
    );
    let records = parse_records(&output);
    let summary = record_of(&records, "summary");
    assert_eq!(summary["ok"], 1);
    assert_eq!(summary["failed"], 1);
    // Order matches the input order; first record is the failure.
    let scans: Vec<&Value> = records.iter().filter(|r| r["record"] == "scan").collect();
    assert!(scans[0]["error"].is_string());
    assert_eq!(scans[1]["n"], 2);
}

#[test]
fn eval_perfect_predictions_score_100() {
    let dir = workdir("eval");
    let pred = dir.join("pred");
    let gt = dir.join("gt");
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&gt).unwrap();
    let mut bytes = Vec::new();
    for label in [1u32, 2, 3, 1, 2] {
        bytes.extend_from_slice(&label.to_le_bytes());
    }
    fs::write(pred.join("000.label"), &bytes).unwrap();
    fs::write(gt.join("000.label"), &bytes).unwrap();
    let output = sfc()
        .arg("eval")
        .arg("--pred")
        .arg(&pred)
        .arg("--gt")
        .arg(&gt)
        .output()
        .unwrap();
    assert!(output.status.success());
    let records = parse_records(&output);
    assert_eq!(record_of(&records, "eval")["miou_pct"], 100.0);
}

#[test]
fn synth_then_stats_shows_occlusion_drops() {
    let dir = workdir("stats");
    let spec = dir.join("scene.spec");
    fs::write(
        &spec,
        "beams rows=32 cols=700 fov_up_deg=2 fov_down_deg=24 jitter=1.0\n\
         plane z=-1.6 class=1\n\
         cylinder x=6 y=0 radius=0.8 class=2\n\
         box cx=9 cy=2 cz=-0.5 hx=0.7 hy=0.7 hz=0.9 class=3\n",
    )
    .unwrap();
    let prefix = dir.join("scene");
    let status = sfc()
        .arg("synth")
        .arg("--spec")
        .arg(&spec)
        .arg("--out-prefix")
        .arg(&prefix)
        .arg("--seed")
        .arg("5")
        .status()
        .unwrap();
    assert!(status.success());

    // Coarse-to-fine resolutions: occupied cells can only grow.
    let cfg = dir.join("c.cfg");
    fs::write(&cfg, "height = 32\nwidth = 512\n").unwrap();
    let output = sfc()
        .arg("stats")
        .arg(dir.join("scene.bin"))
        .arg("--labels")
        .arg(dir.join("scene.label"))
        .arg("--resolutions")
        .arg("32x512,32x1024,32x2048")
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(output.status.success());
    let records = parse_records(&output);
    let resolutions = record_of(&records, "scan")["resolutions"]
        .as_array()
        .unwrap()
        .clone();
    let fractions: Vec<f64> = resolutions
        .iter()
        .map(|r| r["fraction"].as_f64().unwrap())
        .collect();
    assert!(fractions[0] < 1.0, "occluding scene must drop points");
    assert!(fractions.windows(2).all(|w| w[0] <= w[1]));
    // Per-class drop table present when labels are given.
    assert!(resolutions[0]["per_class"].is_array());
}

#[test]
fn sample_writes_downsampled_cloud() {
    let dir = workdir("sample");
    let spec = dir.join("scene.spec");
    fs::write(
        &spec,
        "beams rows=16 cols=128 fov_up_deg=2 fov_down_deg=24 jitter=0.4\n\
         plane z=-1.5 class=1\n",
    )
    .unwrap();
    sfc()
        .arg("synth")
        .arg("--spec")
        .arg(&spec)
        .arg("--out-prefix")
        .arg(dir.join("scene"))
        .status()
        .unwrap();
    let cfg = dir.join("c.cfg");
    fs::write(&cfg, "height = 16\nwidth = 128\n").unwrap();
    let sampled_path = dir.join("sampled.bin");
    let output = sfc()
        .arg("sample")
        .arg(dir.join("scene.bin"))
        .arg("--strides")
        .arg("2,2")
        .arg("--config")
        .arg(&cfg)
        .arg("--out-cloud")
        .arg(&sampled_path)
        .output()
        .unwrap();
    assert!(output.status.success());
    let records = parse_records(&output);
    let scan = record_of(&records, "scan");
    let sampled = scan["sampled"].as_u64().unwrap();
    assert!(sampled > 0 && sampled < scan["n"].as_u64().unwrap());
    let bytes = fs::metadata(&sampled_path).unwrap().len();
    assert_eq!(bytes, sampled * 16);
}

#[test]
fn forward_writes_predictions_for_all_points() {
    let dir = workdir("forward");
    let spec = dir.join("scene.spec");
    fs::write(
        &spec,
        "beams rows=16 cols=96 fov_up_deg=2 fov_down_deg=24 jitter=0.4\n\
         plane z=-1.5 class=1\n\
         cylinder x=5 y=0 radius=0.5 class=2\n",
    )
    .unwrap();
    sfc()
        .arg("synth")
        .arg("--spec")
        .arg(&spec)
        .arg("--out-prefix")
        .arg(dir.join("scene"))
        .status()
        .unwrap();
    let cfg = dir.join("c.cfg");
    fs::write(
        &cfg,
        "height = 16\nwidth = 96\nbase_channels = 8\nnum_classes = 4\nnormalize = none\n",
    )
    .unwrap();
    let pred = dir.join("pred.label");
    let output = sfc()
        .arg("forward")
        .arg(dir.join("scene.bin"))
        .arg("--config")
        .arg(&cfg)
        .arg("--predictions")
        .arg(&pred)
        .output()
        .unwrap();
    assert!(output.status.success());
    let records = parse_records(&output);
    let scan = record_of(&records, "scan");
    let n = scan["n"].as_u64().unwrap();
    assert_eq!(scan["logit_rows"], scan["n"]);
    assert_eq!(fs::metadata(&pred).unwrap().len(), n * 4);
}

#[test]
fn config_env_var_fallback() {
    let dir = workdir("envcfg");
    let scan = dir.join("two.bin");
    write_two_point_fixture(&scan);
    let cfg = dir.join("env.cfg");
    fs::write(&cfg, "height = 4\nwidth = 32\n").unwrap();
    let output = sfc()
        .arg("index")
        .arg(&scan)
        .env("SFC_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(output.status.success());
    let records = parse_records(&output);
    assert_eq!(record_of(&records, "run")["config"]["height"], 4);
    assert_eq!(record_of(&records, "run")["config"]["width"], 32);
}

#[test]
fn missing_input_is_a_diagnostic_error() {
    let output = sfc()
        .arg("index")
        .arg("/nonexistent/path.bin")
        .output()
        .unwrap();
    assert!(!output.status.success());
    let records = parse_records(&output);
    let scan = record_of(&records, "scan");
    assert!(scan["error"].is_string());
}

#[test]
fn malformed_config_is_a_diagnostic_error() {
    let dir = workdir("badcfg");
    let scan = dir.join("two.bin");
    write_two_point_fixture(&scan);
    let cfg = dir.join("bad.cfg");
    fs::write(&cfg, "height asdf\n").unwrap();
    let output = sfc()
        .arg("index")
        .arg(&scan)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let diag: Value = serde_json::from_str(String::from_utf8_lossy(&output.stderr).trim()).unwrap();
    assert_eq!(diag["record"], "error");
    assert!(diag["message"].is_string());
}

#[test]
fn baseline_perfect_on_injective_scene() {
    // Wide grid so every point keeps its own cell: restoration is lossless
    // and both pipelines score 100.
    let dir = workdir("baseline");
    let spec = dir.join("scene.spec");
    fs::write(
        &spec,
        "beams rows=8 cols=64 fov_up_deg=2 fov_down_deg=24 jitter=0.0\n\
         plane z=-1.5 class=1\n",
    )
    .unwrap();
    sfc()
        .arg("synth")
        .arg("--spec")
        .arg(&spec)
        .arg("--out-prefix")
        .arg(dir.join("scene"))
        .status()
        .unwrap();
    let cfg = dir.join("c.cfg");
    fs::write(&cfg, "height = 8\nwidth = 64\n").unwrap();
    let output = sfc()
        .arg("baseline")
        .arg(dir.join("scene.bin"))
        .arg("--labels")
        .arg(dir.join("scene.label"))
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(output.status.success());
    let records = parse_records(&output);
    let scan = record_of(&records, "scan");
    assert_eq!(scan["dropped"], 0);
    assert_eq!(scan["restored_miou_pct"], 100.0);
    assert_eq!(scan["frustum_miou_pct"], 100.0);
}
