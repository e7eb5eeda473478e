use std::path::Path;
use std::process::{Command, Output};

use biped::output::{sha256_hex, TRAJECTORY_HEADER};

fn biped(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biped"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_is_byte_stable_and_indexed_by_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "short.toml", "[sim]\nsteps = 3\n");
    for out in ["a", "b"] {
        let o = biped(&["simulate", "--config", &cfg, "--out", out], tmp.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "trajectory.csv",
        "projection.csv",
        "step_times.csv",
        "summary.json",
    ] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between reruns");
    }
    let traj = std::fs::read_to_string(tmp.path().join("a/trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some(TRAJECTORY_HEADER));

    let manifest = json(&tmp.path().join("a/manifest.json"));
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 4);
    for entry in outputs {
        let bytes =
            std::fs::read(tmp.path().join("a").join(entry["file"].as_str().unwrap())).unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
    let config = manifest["config"].as_str().unwrap();
    assert_eq!(
        manifest["config_digest"].as_str().unwrap(),
        sha256_hex(config.as_bytes())
    );
    assert!(config.contains("steps = 3"));
    let summary = json(&tmp.path().join("a/summary.json"));
    assert_eq!(
        summary["manifest"]["config_digest"],
        manifest["config_digest"]
    );
    assert_eq!(summary["step_times"].as_array().unwrap().len(), 3);
}

#[test]
fn steps_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let o = biped(&["simulate", "--steps", "2", "--out", "o"], tmp.path());
    assert!(o.status.success());
    let summary = json(&tmp.path().join("o/summary.json"));
    assert_eq!(summary["completed_steps"], 2);
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.toml", "[plant]\nleg_mass = -1.0\n");
    let o = biped(&["simulate", "--config", &bad], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("plant.leg_mass"));

    let garbled = write(tmp.path(), "garbled.toml", "[sim]\nsteps = \"many\"\n");
    assert_eq!(
        biped(&["simulate", "--config", &garbled], tmp.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        biped(&["simulate", "--config", "missing.toml"], tmp.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(biped(&["sweep"], tmp.path()).status.code(), Some(2));
}

#[test]
fn falling_robot_exits_with_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "steep.toml",
        "[sim]\nlambda_true_deg = 40.0\nsteps = 3\n",
    );
    let o = biped(&["simulate", "--config", &cfg, "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(
        stderr.contains("warning") && stderr.contains("aborted"),
        "{stderr}"
    );
    assert!(tmp.path().join("o/summary.json").exists());
}

#[test]
fn sweep_writes_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "sweep.toml",
        "[sim]\nsteps = 4\n[sweep]\naxis = \"all_masses\"\nstart = -0.1\nend = 0.1\nsamples = 3\n",
    );
    let o = biped(&["sweep", "--config", &cfg, "--out", "s"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn orbit_and_verify_succeed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = biped(&["orbit", "--out", "o"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&tmp.path().join("o/summary.json"));
    let t = summary["orbit"]["step_time"].as_f64().unwrap();
    assert!((t - 0.53).abs() < 0.01, "{t}");

    let v = biped(
        &["verify", "--samples", "100", "--seed", "7", "--out", "v"],
        tmp.path(),
    );
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stdout));
    assert_eq!(json(&tmp.path().join("v/certificate.json"))["passed"], true);
}

#[test]
fn version_verb() {
    let tmp = tempfile::tempdir().unwrap();
    let o = biped(&["version"], tmp.path());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("biped "));
}
