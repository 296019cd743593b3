use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_fracbayes");

/// Small mesh and short runs; individual tests patch what they need.
fn small_config() -> Value {
    serde_json::json!({
        "mesh": { "n_cells": 64, "modes": 32 },
        "observation": { "m": 10, "gamma": 0.1 },
        "experiment": {
            "grid_points": 51,
            "mcmc": { "n_steps": 1000, "beta": 0.2, "s_step": 0.05, "infer_coefficient": true,
                      "burn_in": 100, "n_cells": 32, "modes": 16 },
            "verify": { "pairs": 4, "coarse_cells": 32, "fine_cells": 64, "n_eigen": 3, "max_amplitude": 0.1,
                        "extension_cells": 32, "extension_layers": 32, "y_max": 8.0, "grading": 3.0,
                        "wellposedness_gamma": 0.3 }
        }
    })
}

fn patch(mut cfg: Value, path: &[&str], v: Value) -> Value {
    let mut node = &mut cfg;
    for key in &path[..path.len() - 1] {
        node = node
            .as_object_mut()
            .unwrap()
            .entry(key.to_string())
            .or_insert_with(|| serde_json::json!({}));
    }
    node[path[path.len() - 1]] = v;
    cfg
}

struct Run {
    _tmp: TempDir,
    out: PathBuf,
    output: Output,
}

fn run_with(cfg_text: &str, command: &str, extra: &[&str]) -> Run {
    let tmp = TempDir::new().unwrap();
    let cfg_path = tmp.path().join("config.json");
    fs::write(&cfg_path, cfg_text).unwrap();
    let out = tmp.path().join("out");
    let output = Command::new(BIN)
        .arg(command)
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    Run { _tmp: tmp, out, output }
}

fn run(cfg: &Value, command: &str) -> Run {
    run_with(&cfg.to_string(), command, &[])
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_ok(r: &Run) {
    assert!(
        r.output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&r.output.stderr)
    );
}

fn points(r: &Run) -> Vec<f64> {
    read_json(&r.out.join("data.json"))["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect()
}

#[test]
fn synth_single_point_sits_at_right_end() {
    let r = run(&patch(small_config(), &["observation", "m"], 1.into()), "synth");
    assert_ok(&r);
    assert_eq!(points(&r), vec![std::f64::consts::PI]);
}

#[test]
fn synth_three_points_span_the_interval() {
    let r = run(&patch(small_config(), &["observation", "m"], 3.into()), "synth");
    assert_ok(&r);
    let p = points(&r);
    assert_eq!(p.len(), 3);
    assert_eq!(p[0], -std::f64::consts::PI);
    assert!(p[1].abs() < 1e-15);
    assert_eq!(p[2], std::f64::consts::PI);
}

#[test]
fn synth_echoes_noiseless_observations_and_provenance() {
    let r = run(&small_config(), "synth");
    assert_ok(&r);
    let doc = read_json(&r.out.join("data.json"));
    assert_eq!(doc["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(doc["seed"], 2024);
    assert_eq!(doc["y"].as_array().unwrap().len(), 10);
    assert_eq!(doc["noiseless"].as_array().unwrap().len(), 10);
    assert_eq!(doc["s_star"], 0.7);
}

#[test]
fn seed_flag_overrides_config() {
    let a = run_with(&small_config().to_string(), "synth", &["--seed", "5"]);
    assert_ok(&a);
    let doc = read_json(&a.out.join("data.json"));
    assert_eq!(doc["seed"], 5);
    let b = run(&small_config(), "synth");
    assert_ne!(
        fs::read(a.out.join("data.json")).unwrap(),
        fs::read(b.out.join("data.json")).unwrap()
    );
}

#[test]
fn reruns_are_byte_identical_across_output_locations() {
    for command in ["synth", "posterior-grid", "mcmc", "hellinger-sweep"] {
        let a = run(&small_config(), command);
        let b = run(&small_config(), command);
        assert_ok(&a);
        assert_ok(&b);
        let mut names: Vec<_> = fs::read_dir(&a.out).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            assert_eq!(
                fs::read(a.out.join(&name)).unwrap(),
                fs::read(b.out.join(&name)).unwrap(),
                "{command}: {name:?}"
            );
        }
    }
}

#[test]
fn invalid_config_exits_1_without_outputs() {
    let bad_key = r#"{ "mesh": { "n_cells": 64, "modes": 32, "typo": 1 } }"#;
    let r = run_with(bad_key, "synth", &[]);
    assert_eq!(r.output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.output.stderr).contains("line 1"));
    assert!(!r.out.exists());

    let bad_value = patch(small_config(), &["observation", "gamma"], (-1.0).into());
    let r = run(&bad_value, "posterior-grid");
    assert_eq!(r.output.status.code(), Some(1));
    assert!(!r.out.exists());

    let r = run(
        &patch(small_config(), &["observation", "m"], 0.into()),
        "hellinger-sweep",
    );
    assert_eq!(r.output.status.code(), Some(1));
    assert!(!r.out.exists());
}

#[test]
fn missing_config_file_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let output = Command::new(BIN)
        .args(["synth", "--config"])
        .arg(tmp.path().join("absent.json"))
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("absent.json"));
}

#[test]
fn posterior_without_data_equals_prior() {
    let cfg = patch(small_config(), &["observation", "m"], 0.into());
    let r = run(&cfg, "posterior-grid");
    assert_ok(&r);
    let text = fs::read_to_string(r.out.join("density.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "s,weight");
    let width = 0.95 - 0.05;
    let mut rows = 0;
    for line in lines {
        let w: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((w - 1.0 / width).abs() < 1e-12, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 51);
}

#[test]
fn sweep_writes_one_density_per_cell() {
    let cfg = patch(
        small_config(),
        &["experiment", "sweep"],
        serde_json::json!({ "m": [1, 10], "gamma": [0.3, 0.1] }),
    );
    let r = run(&cfg, "posterior-grid");
    assert_ok(&r);
    for name in [
        "density_m1_gamma0.3.csv",
        "density_m1_gamma0.1.csv",
        "density_m10_gamma0.3.csv",
        "density_m10_gamma0.1.csv",
    ] {
        assert!(r.out.join(name).exists(), "{name}");
    }
    let summary = read_json(&r.out.join("summary.json"));
    assert_eq!(summary["cells"].as_array().unwrap().len(), 4);
    assert!(summary["concentration"]["pass"].is_boolean());
}

#[test]
fn mcmc_smoke_run_emits_well_formed_chain() {
    let r = run(&small_config(), "mcmc");
    assert_ok(&r);
    let text = fs::read_to_string(r.out.join("chain.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 1 + 16 + 2);
    assert_eq!((header[0], header[1], header[2]), ("step", "s", "xi_1"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 1000);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), header.len());
        let s: f64 = cols[1].parse().unwrap();
        assert!((0.05..=0.95).contains(&s));
    }
    let summary = read_json(&r.out.join("mcmc_summary.json"));
    let rate = summary["acceptance_rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rate));
    assert!(summary["stalled"].is_boolean());
}

#[test]
fn order_only_chain_has_no_coefficient_columns() {
    let cfg = patch(
        small_config(),
        &["experiment", "mcmc", "infer_coefficient"],
        false.into(),
    );
    let r = run(&cfg, "mcmc");
    assert_ok(&r);
    let text = fs::read_to_string(r.out.join("chain.csv")).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "step,s,phi,accepted");
}

#[test]
fn hellinger_sweep_reports_each_epsilon() {
    let r = run(&small_config(), "hellinger-sweep");
    assert_ok(&r);
    let doc = read_json(&r.out.join("hellinger.json"));
    assert_eq!(doc["pairs"].as_array().unwrap().len(), 3);
    assert!(doc["slope"].as_f64().unwrap().is_finite());
    let csv = fs::read_to_string(r.out.join("hellinger.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "eps,delta_y,d_hell,ratio");
    assert_eq!(csv.lines().count(), 2 + 3);
}

#[test]
fn verify_passes_on_small_config() {
    let r = run(&small_config(), "verify");
    assert_ok(&r);
    let doc = read_json(&r.out.join("verify.json"));
    assert_eq!(doc["pass"], true);
    for check in doc["checks"].as_array().unwrap() {
        assert!(check["value"].is_number(), "{check}");
        assert!(check["lower"].is_number() || check["upper"].is_number(), "{check}");
    }
}

#[test]
fn corrupted_stiffness_fails_verification() {
    let cfg = patch(
        small_config(),
        &["experiment", "fault_injection"],
        "corrupt_stiffness".into(),
    );
    let r = run(&cfg, "verify");
    assert_eq!(r.output.status.code(), Some(3));
    let doc = read_json(&r.out.join("verify.json"));
    assert_eq!(doc["pass"], false);
    let null = doc["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "stiffness_null_space")
        .unwrap();
    assert_eq!(null["pass"], false);
}
