//! End-to-end tests of the `sheetlab` binary: exit codes, output files,
//! manifest contents, and byte-level reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sheetlab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sheetlab-cli-test-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const SMALL_PINNING: &str = r#"{
  "kind": "verify-pinning",
  "seed": 7,
  "trials": 200,
  "max_axes": 3,
  "oracle_instances": 20
}"#;

#[test]
fn list_shows_seven_kinds() {
    let out = run(&["--list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for kind in [
        "verify-pinning",
        "verify-girsanov",
        "covering",
        "density",
        "capacity",
        "phase",
        "hitting",
    ] {
        assert!(text.contains(kind), "missing {kind} in listing");
    }
    assert_eq!(text.matches("parameters:").count(), 7);
}

#[test]
fn list_json_is_machine_readable() {
    let out = run(&["--list", "--json"]);
    assert!(out.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let kinds = parsed.as_array().unwrap();
    assert_eq!(kinds.len(), 7);
    assert!(kinds[0].get("parameters").is_some());
    assert!(kinds[0].get("backs_criteria").is_some());
}

#[test]
fn unknown_kind_query_fails() {
    let out = run(&["--list", "--kind", "no-such-kind"]);
    assert!(!out.status.success());
}

#[test]
fn unknown_subcommand_fails() {
    let out = run(&["frobnicate"]);
    assert!(!out.status.success());
}

#[test]
fn small_run_produces_csv_and_manifest() {
    let dir = temp_dir("small-run");
    let config = write_config(&dir, "config.json", SMALL_PINNING);
    let out_dir = dir.join("out");
    let out = run(&[
        "verify-pinning",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("pinning.csv")).unwrap();
    assert!(csv.starts_with("trial,axes,mode,residual,weight_sum_error,min_weight"));
    assert!(csv.lines().count() > 200);
    assert!(out_dir.join("oracle.csv").exists());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["kind"], "verify-pinning");
    assert!(manifest["wall_time_ms"].is_u64());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = temp_dir("seed-override");
    let config = write_config(&dir, "config.json", SMALL_PINNING);
    let out_dir = dir.join("out");
    let out = run(&[
        "verify-pinning",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "4242",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4242);
}

#[test]
fn invalid_separation_names_the_invariant_and_exits_one() {
    let dir = temp_dir("bad-delta");
    let config = write_config(
        &dir,
        "config.json",
        r#"{
  "kind": "phase",
  "seed": 1,
  "regimes": [{ "N": 1, "d": 1, "k": 2 }],
  "window": [1.0, 2.0],
  "delta": 5.0,
  "eps_ladder": [0.2],
  "trials": 5,
  "modes": ["self_intersections"]
}"#,
    );
    let out = run(&[
        "phase",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("separation delta must be positive and smaller than the window diameter"),
        "stderr: {err}"
    );
}

#[test]
fn unknown_config_fields_rejected() {
    let dir = temp_dir("unknown-field");
    let config = write_config(
        &dir,
        "config.json",
        r#"{ "kind": "density", "seed": 1, "cases": [{"N":1,"k":2}], "delta": 0.1, "upper": 2.0, "trials": 5, "bogus": true }"#,
    );
    let out = run(&[
        "density",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("unknown field"), "stderr: {err}");
}

#[test]
fn kind_mismatch_rejected() {
    let dir = temp_dir("kind-mismatch");
    let config = write_config(&dir, "config.json", SMALL_PINNING);
    let out = run(&[
        "density",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn contract_violation_exits_two() {
    // An absurdly tight slope tolerance turns the (passing) covering slope
    // into a named contract violation.
    let dir = temp_dir("contract");
    let config = write_config(
        &dir,
        "config.json",
        r#"{
  "kind": "covering",
  "seed": 0,
  "cases": [{ "k": 2, "N": 1 }],
  "n_lo": 3,
  "n_hi": 7,
  "delta": 0.1,
  "upper": 2.0,
  "slope_tolerance": 1e-9
}"#,
    );
    let out_dir = dir.join("out");
    let out = run(&[
        "covering",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("contract violation"), "stderr: {err}");
    // The manifest still records the run with its failures.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "contract-violation");
    assert!(!manifest["failures"].as_array().unwrap().is_empty());
}

#[test]
fn identical_config_and_seed_reproduce_result_files() {
    let dir = temp_dir("repro");
    let config = write_config(
        &dir,
        "config.json",
        r#"{
  "kind": "phase",
  "seed": 99,
  "regimes": [{ "N": 1, "d": 2, "k": 2 }],
  "window": [1.0, 2.0],
  "delta": 0.1,
  "eps_ladder": [0.2, 0.1],
  "trials": 60,
  "modes": ["self_intersections"]
}"#,
    );
    let mut contents = Vec::new();
    let mut manifests = Vec::new();
    for pass in 0..2 {
        let out_dir = dir.join(format!("out{pass}"));
        let out = run(&[
            "phase",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--jobs",
            if pass == 0 { "1" } else { "2" },
        ]);
        assert!(out.status.success());
        contents.push(fs::read(out_dir.join("phase.csv")).unwrap());
        manifests.push(fs::read_to_string(out_dir.join("manifest.json")).unwrap());
    }
    // Result files byte-identical, even across parallelism degrees.
    assert_eq!(contents[0], contents[1]);
    // Manifests may differ only in wall time and the output paths.
    let mut a: serde_json::Value = serde_json::from_str(&manifests[0]).unwrap();
    let mut b: serde_json::Value = serde_json::from_str(&manifests[1]).unwrap();
    for m in [&mut a, &mut b] {
        m.as_object_mut().unwrap().remove("wall_time_ms");
        m.as_object_mut().unwrap().remove("files");
    }
    assert_eq!(a, b);
}
