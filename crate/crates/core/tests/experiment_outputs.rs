use std::path::{Path, PathBuf};

use hetbandit::experiment::{
    emit_outputs, parse_config, read_results_csv, run_experiment, summarize, write_summary_csv,
    ExperimentConfig, RunOptions, RESULTS_HEADER,
};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn small_config(policies: &str, replications: usize) -> ExperimentConfig {
    let text = format!(
        r#"{{
  "environment": {{ "kind": "synthetic", "d": 30, "d_z": 6, "s": 3, "theta_nnz": 3, "l_bar": 5.0 }},
  "policies": {policies},
  "horizon": 300,
  "n0": 50,
  "replications": {replications},
  "base_seed": 9,
  "misclass_samples": 500
}}"#
    );
    ExperimentConfig::from_json(&text).expect("valid config")
}

const ALL_POLICIES: &str = r#"[
    { "kind": "hetero" }, { "kind": "single_lasso" }, { "kind": "separate_oracle" },
    { "kind": "regular_oracle" }, { "kind": "strong_oracle" }, { "kind": "uniform" }
  ]"#;

#[test]
fn shipped_configs_parse() {
    for name in ["quick", "desk", "lower_bound", "semi_synthetic"] {
        let path = repo_root().join("configs").join(format!("{name}.json"));
        parse_config(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn oracle_columns_are_zero() {
    let config = small_config(
        r#"[{ "kind": "strong_oracle" }, { "kind": "regular_oracle" }]"#,
        2,
    );
    let rows = run_experiment(&config, RunOptions::default())
        .unwrap()
        .table();
    for row in &rows {
        match row.policy.as_str() {
            "strong_oracle" => assert_eq!((row.strong_instant, row.strong_cum), (0.0, 0.0)),
            "regular_oracle" => assert_eq!((row.regular_instant, row.regular_cum), (0.0, 0.0)),
            other => panic!("unexpected policy {other}"),
        }
        assert!(row.err_l2.is_none(), "oracles have no estimates to score");
    }
}

#[test]
fn table_shape_and_boundary_columns() {
    let config = small_config(ALL_POLICIES, 2);
    let results = run_experiment(&config, RunOptions::default()).unwrap();
    let rows = results.table();
    assert_eq!(rows.len(), 6 * 2 * 300);
    assert!(results.paired());
    // episodes of n0 = 50: rounds 1-50, 51-150, 151-300; refits after rounds 50 and 150
    let boundary_rounds: Vec<usize> = rows
        .iter()
        .filter(|r| r.policy == "hetero" && r.rep == 0 && r.err_l2.is_some())
        .map(|r| r.round)
        .collect();
    assert_eq!(boundary_rounds, vec![50, 150]);
    for r in rows.iter().filter(|r| r.err_l2.is_some()) {
        assert!(r.err_l1.is_some() && r.excess_misclass.is_some());
        assert!(r.err_l1.unwrap() >= r.err_l2.unwrap());
    }
}

#[test]
fn single_replication_has_zero_standard_errors() {
    let config = small_config(r#"[{ "kind": "uniform" }]"#, 1);
    let rows = run_experiment(&config, RunOptions::default())
        .unwrap()
        .table();
    for s in summarize(&rows) {
        assert_eq!((s.strong_avg_se, s.regular_avg_se), (0.0, 0.0));
    }
}

#[test]
fn outputs_are_bitwise_reproducible_and_summary_round_trips() {
    let config = small_config(ALL_POLICIES, 3);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_outputs(
        &run_experiment(&config, RunOptions::default()).unwrap(),
        a.path(),
    )
    .unwrap();
    let parallel = RunOptions {
        jobs: 3,
        progress: false,
    };
    emit_outputs(&run_experiment(&config, parallel).unwrap(), b.path()).unwrap();
    for file in [
        "results.csv",
        "summary.csv",
        "episodes.csv",
        "regret.svg",
        "error.svg",
    ] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert!(x == y, "{file} differs between runs");
    }

    let text = std::fs::read_to_string(a.path().join("results.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), RESULTS_HEADER.join(","));

    let rows = read_results_csv(&a.path().join("results.csv")).unwrap();
    let again = a.path().join("summary_again.csv");
    write_summary_csv(&summarize(&rows), &again).unwrap();
    assert_eq!(
        std::fs::read(a.path().join("summary.csv")).unwrap(),
        std::fs::read(&again).unwrap()
    );
}

#[test]
fn svg_has_one_series_per_policy() {
    let config = small_config(ALL_POLICIES, 1);
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(
        &run_experiment(&config, RunOptions::default()).unwrap(),
        dir.path(),
    )
    .unwrap();
    let svg = std::fs::read_to_string(dir.path().join("regret.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    for policy in [
        "hetero",
        "single_lasso",
        "separate_oracle",
        "regular_oracle",
        "strong_oracle",
        "uniform",
    ] {
        assert!(svg.contains(policy), "legend misses {policy}");
    }
}

#[test]
fn missing_data_file_aborts_the_run() {
    let text = r#"{
  "environment": { "kind": "semi_synthetic", "path": "/nonexistent/table.csv",
    "columns": { "reward_column": "y", "group_column": "g", "z_columns": ["z"], "arm_columns": [["x"]] } },
  "policies": [ { "kind": "uniform" } ],
  "horizon": 10,
  "n0": 5
}"#;
    let config = ExperimentConfig::from_json(text).unwrap();
    assert!(run_experiment(&config, RunOptions::default()).is_err());
}
