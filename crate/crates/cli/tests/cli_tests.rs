//! End-to-end checks of the `pig` binary: exit codes, file outputs, and
//! worker-count independence.

use std::fs;
use std::path::Path;
use std::process::Command;

fn pig() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pig"))
}

fn write(path: &Path, content: &str) {
    fs::write(path, content).unwrap();
}

const FIG2_DAG: &str = r#"{
    "nodes": ["X1", "X2", "X3", "X4", "X5", "Y", "E"],
    "edges": [["X2","X1"],["X1","Y"],["X2","Y"],["Y","X3"],["Y","X4"],
              ["X2","X4"],["X4","X5"],["E","X1"],["E","X4"]],
    "response": "Y",
    "env": "E"
}"#;

#[test]
fn graph_subcommands_emit_expected_sets() {
    let dir = tempfile::tempdir().unwrap();
    let dag = dir.path().join("fig2.json");
    write(&dag, FIG2_DAG);

    let out = pig().args(["graph", "sb"]).arg(&dag).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "X1,X2,X3");

    let out = pig().args(["graph", "mb"]).arg(&dag).output().unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "X1,X2,X3,X4");

    let out = pig().args(["graph", "star"]).arg(&dag).output().unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "true");

    let out = pig()
        .args(["graph", "dsep"])
        .arg(&dag)
        .args(["--a", "Y", "--b", "E", "--given", "X1,X2,X3"])
        .output()
        .unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "true");

    let out = pig()
        .args(["graph", "dsep"])
        .arg(&dag)
        .args(["--a", "Y", "--b", "E", "--given", "X1,X2,X4"])
        .output()
        .unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "false");
}

#[test]
fn exit_codes_distinguish_error_classes() {
    let dir = tempfile::tempdir().unwrap();

    // Malformed JSON: exit 2.
    let bad_json = dir.path().join("bad.json");
    write(&bad_json, "{ not json");
    let out = pig()
        .args(["run"])
        .arg(bad_json.to_str().unwrap())
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{out:?}");

    // Schema violation (unknown key): exit 3.
    let bad_schema = dir.path().join("schema.json");
    write(
        &bad_schema,
        r#"{"name": "x", "task": "regression", "bogus": 1, "replication": {"reps": 1, "seed": 0}}"#,
    );
    let out = pig()
        .args(["run"])
        .arg(bad_schema.to_str().unwrap())
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{out:?}");

    // Empty environments list: exit 3.
    let empty_envs = dir.path().join("empty_envs.json");
    let mut scenario: serde_json::Value =
        serde_json::from_str(include_str!("../scenarios/star.json")).unwrap();
    scenario["environments"]["list"] = serde_json::json!([]);
    write(&empty_envs, &scenario.to_string());
    let out = pig()
        .args(["run"])
        .arg(empty_envs.to_str().unwrap())
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{out:?}");

    // Edge E -> Y: semantic violation, exit 4.
    let bad_dag = dir.path().join("eydag.json");
    let mut scenario: serde_json::Value =
        serde_json::from_str(include_str!("../scenarios/star.json")).unwrap();
    scenario["dag"]["edges"]
        .as_array_mut()
        .unwrap()
        .push(serde_json::json!(["E", "Y"]));
    write(&bad_dag, &scenario.to_string());
    let out = pig()
        .args(["run"])
        .arg(bad_dag.to_str().unwrap())
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "{out:?}");
}

#[test]
fn star_run_reproduces_known_risks() {
    let dir = tempfile::tempdir().unwrap();
    let out = pig()
        .args(["run", "star", "--p", "0.25", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let rows = fs::read_to_string(dir.path().join("star_outcomes.csv")).unwrap();
    let mut saw_four_point = false;
    let mut saw_sb = false;
    for line in rows.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        match fields[0] {
            "four-point" => {
                assert_eq!(fields[2], "q1");
                assert_eq!(fields[4], "0.1875");
                saw_four_point = true;
            }
            "sb" => {
                assert_eq!(fields[4], "0.25");
                saw_sb = true;
            }
            _ => {}
        }
    }
    assert!(saw_four_point && saw_sb);
}

#[test]
fn outputs_are_identical_across_worker_counts() {
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    for (dir, workers) in [(&dir1, "1"), (&dir2, "2")] {
        let out = pig()
            .args(["run", "sc-learning", "--reps", "2", "--seed", "5", "--workers", workers])
            .args(["--out"])
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "{out:?}");
    }
    for file in ["sc-learning_outcomes.csv", "sc-learning_aggregate.csv", "sc-learning_learning.csv"] {
        let a = fs::read(dir1.path().join(file)).unwrap();
        let b = fs::read(dir2.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs across worker counts");
    }
}

#[test]
fn test_invariance_runs_on_csv_data() {
    let dir = tempfile::tempdir().unwrap();
    // Tiny two-environment dataset with an obvious shift.
    let mut csv = String::from("x_A,y,env\n");
    for i in 0..200 {
        let e = i % 2;
        let x = (i as f64 * 0.7).sin();
        let y = x + e as f64 * 2.0 + ((i * 37 % 100) as f64 / 100.0 - 0.5);
        csv.push_str(&format!("{x},{y},e{e}\n"));
    }
    let data = dir.path().join("data.csv");
    write(&data, &csv);
    let out = pig()
        .args(["test-invariance"])
        .arg(&data)
        .args(["--subset", "A", "--test", "ird", "--seed", "7"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("subset,test,statistic,dof,p"), "{text}");
    let p: f64 = text.lines().nth(1).unwrap().split(',').last().unwrap().parse().unwrap();
    assert!(p < 0.01, "expected rejection, p = {p}");
}

#[test]
fn oracle_counterexample_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let dag = dir.path().join("star-dag.json");
    write(
        &dag,
        r#"{"nodes": ["X1","X2","Y","E"],
            "edges": [["Y","X1"],["Y","X2"],["X2","X1"],["E","X2"]],
            "response": "Y", "env": "E"}"#,
    );
    let out = pig()
        .args(["oracle", "counterexample"])
        .arg(&dag)
        .args(["--seed", "4"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("certificate,true"), "{text}");

    // The benchmark DAG satisfies the condition; the oracle must refuse.
    let good = dir.path().join("fig2.json");
    write(&good, FIG2_DAG);
    let out = pig()
        .args(["oracle", "counterexample"])
        .arg(&good)
        .output()
        .unwrap();
    assert!(!out.status.success());
}
