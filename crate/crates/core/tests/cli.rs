use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hetbandit"))
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const TINY: &str = r#"{
  "environment": { "kind": "lower_bound" },
  "policies": [ { "kind": "regular_oracle" }, { "kind": "uniform" } ],
  "horizon": 200,
  "n0": 50,
  "replications": 2
}"#;

#[test]
fn run_writes_outputs_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "tiny.json", TINY);
    let out = dir.path().join("out");
    let status = bin()
        .args([
            "run",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--jobs",
            "2",
            "--seed",
            "5",
        ])
        .output()
        .unwrap();
    assert_eq!(
        status.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    for file in [
        "results.csv",
        "summary.csv",
        "episodes.csv",
        "regret.svg",
        "error.svg",
    ] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 * 2 * 200);
    assert!(
        !String::from_utf8_lossy(&status.stderr).is_empty(),
        "progress goes to stderr"
    );
}

#[test]
fn seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "tiny.json", TINY);
    let run = |seed: &str, out: &str| {
        let out = dir.path().join(out);
        let s = bin()
            .args([
                "run",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                seed,
            ])
            .output()
            .unwrap();
        assert!(s.status.success());
        std::fs::read(out.join("results.csv")).unwrap()
    };
    assert_eq!(run("1", "a"), run("1", "b"));
    assert_ne!(run("1", "a"), run("2", "c"));
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        &TINY.replace("\"n0\": 50", "\"n0\": 500"),
    );
    let unknown = write(
        dir.path(),
        "unknown.json",
        &TINY.replace("\"n0\"", "\"n_0\""),
    );
    for path in [bad, unknown, dir.path().join("missing.json")] {
        for cmd in ["run", "check"] {
            let out = bin().args([cmd, path.to_str().unwrap()]).output().unwrap();
            assert_eq!(out.status.code(), Some(1), "{cmd} {}", path.display());
        }
    }
    let out = bin()
        .args(["run", dir.path().join("bad.json").to_str().unwrap()])
        .output()
        .unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("horizon"), "error names the key: {stderr}");
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing_data = write(
        dir.path(),
        "semi.json",
        r#"{
  "environment": { "kind": "semi_synthetic", "path": "absent.csv",
    "columns": { "reward_column": "y", "group_column": "g", "z_columns": ["z"], "arm_columns": [["x"]] } },
  "policies": [ { "kind": "uniform" } ],
  "horizon": 10,
  "n0": 5
}"#,
    );
    let out = bin()
        .args(["run", missing_data.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // the output directory cannot be created under a regular file
    let config = write(dir.path(), "tiny.json", TINY);
    let blocker = write(dir.path(), "blocker", "");
    let out = bin()
        .args([
            "run",
            config.to_str().unwrap(),
            "--out",
            blocker.join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_prints_an_assumption_report() {
    let out = bin()
        .args([
            "check",
            repo_root()
                .join("configs/lower_bound.json")
                .to_str()
                .unwrap(),
            "--probe",
            "500",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("quantity,value,threshold,satisfied"));
    // zero gating coefficients: the bound is exactly zero
    assert!(text.contains("gating_bound,0,"));
}
