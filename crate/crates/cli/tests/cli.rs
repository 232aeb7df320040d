//! End-to-end checks of the `confaudit` binary: command flows, output
//! shapes, exit codes, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use confaudit_core::domain::LabelUniverse;
use confaudit_core::icp::CalibrationSet;
use confaudit_core::scorers::ExternalClassScorer;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_confaudit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// The four-disease fixture: calibration ranks 1..99 and a test patient
/// whose per-label scores force p-values {A: 0.02, B: 0.40, C: 0.01,
/// D: 0.20}; at 95% confidence the set must be {B, D}.
#[test]
fn predict_reports_the_expected_disease_set() {
    let dir = tempfile::tempdir().unwrap();
    let universe =
        LabelUniverse::from_names(["A".into(), "B".into(), "C".into(), "D".into()]);
    let scores_csv = "example_id,label,score\npatient,A,98.5\npatient,B,60.5\npatient,C,100\npatient,D,80.5\n";
    let table = ExternalClassScorer::from_reader(scores_csv.as_bytes(), &universe).unwrap();
    let calibration = CalibrationSet::from_scores((1..=99).map(f64::from).collect());

    let predictor = serde_json::json!({
        "format_version": 1,
        "method": "icp",
        "task": "classification",
        "feature_names": [],
        "label_universe": universe,
        "confidence_levels": [0.95],
        "seed": 1,
        "scorer": {"kind": "external-class", "path": "scores.csv", "table": table},
        "calibration": calibration,
    });
    write(
        &dir.path().join("predictor.json"),
        &serde_json::to_string_pretty(&predictor).unwrap(),
    );

    // The config still names a dataset; point it at a stub file.
    write(&dir.path().join("stub.csv"), "example_id,label\nstub,A\n");
    write(&dir.path().join("scores.csv"), scores_csv);
    let config = serde_json::json!({
        "dataset": {"path": dir.path().join("stub.csv")},
        "scorer": {"kind": "external-class", "path": dir.path().join("scores.csv")},
        "method": "icp",
        "confidence_levels": [0.95],
        "seed": 1,
        "output_dir": dir.path(),
        "predictor_path": dir.path().join("predictor.json"),
    });
    let config_path = dir.path().join("config.json");
    write(&config_path, &serde_json::to_string_pretty(&config).unwrap());

    write(&dir.path().join("input.csv"), "example_id\npatient\n");
    let out = run(&[
        "predict",
        "--config",
        config_path.to_str().unwrap(),
        "--input",
        dir.path().join("input.csv").to_str().unwrap(),
        "--level",
        "0.95",
    ]);
    assert_success(&out);

    let stdout = String::from_utf8(out.stdout).unwrap();
    let record: serde_json::Value = serde_json::from_str(stdout.lines().next().unwrap()).unwrap();
    assert_eq!(record["example_id"], "patient");
    assert_eq!(record["set"], serde_json::json!(["B", "D"]));
    assert_eq!(record["p_values"]["A"], 0.02);
    assert_eq!(record["p_values"]["B"], 0.40);
    assert_eq!(record["p_values"]["C"], 0.01);
    assert_eq!(record["p_values"]["D"], 0.20);

    // The persisted batch output exists and matches.
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("predictions.json")).unwrap())
            .unwrap();
    assert_eq!(saved[0]["set"], serde_json::json!(["B", "D"]));
}

fn gaussian_config(dir: &Path, out: &Path) -> PathBuf {
    let config = serde_json::json!({
        "dataset": {"synthetic": {
            "family": "gaussian-classes",
            "n": 600, "classes": 3, "dim": 2,
            "separation": 3.0, "noise": 1.0, "seed": 7
        }},
        "scorer": {"kind": "knn-class", "k": 3},
        "method": "icp",
        "confidence_levels": [0.9, 0.95],
        "split": {"train": 0.5, "calibration": 0.4},
        "seed": 42,
        "output_dir": out,
    });
    let path = dir.join("config.json");
    write(&path, &serde_json::to_string_pretty(&config).unwrap());
    path
}

#[test]
fn calibrate_then_predict_round_trips_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("input.csv");
    write(
        &input,
        "example_id,x0,x1\nq1,3.0,0.0\nq2,-1.5,2.6\nq3,0.0,0.0\n",
    );

    let mut artifacts: Vec<(Vec<u8>, Vec<u8>, Vec<u8>)> = Vec::new();
    for run_idx in 0..2 {
        let out_dir = dir.path().join(format!("out{run_idx}"));
        let config = gaussian_config(dir.path(), &out_dir);
        let out = run(&["calibrate", "--config", config.to_str().unwrap()]);
        assert_success(&out);
        let predict = run(&[
            "predict",
            "--config",
            config.to_str().unwrap(),
            "--input",
            input.to_str().unwrap(),
        ]);
        assert_success(&predict);
        artifacts.push((
            std::fs::read(out_dir.join("predictor.json")).unwrap(),
            std::fs::read(out_dir.join("predictions.json")).unwrap(),
            predict.stdout,
        ));
    }
    assert_eq!(artifacts[0].0, artifacts[1].0, "predictor.json must be byte-identical");
    assert_eq!(artifacts[0].1, artifacts[1].1, "predictions.json must be byte-identical");
    assert_eq!(artifacts[0].2, artifacts[1].2, "stdout must be byte-identical");

    // Reloading the saved predictor gives identical predictions: the second
    // predict above already exercised a fresh load of the same file.
    let parsed: serde_json::Value =
        serde_json::from_str(std::str::from_utf8(&artifacts[0].2).unwrap().lines().next().unwrap())
            .unwrap();
    assert_eq!(parsed["level"], 0.9);
    assert!(parsed["set"].is_array());
}

#[test]
fn seed_override_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = gaussian_config(dir.path(), &out_a);
    assert_success(&run(&["calibrate", "--config", config.to_str().unwrap()]));
    assert_success(&run(&[
        "calibrate",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "43",
        "--out",
        out_b.to_str().unwrap(),
    ]));
    let a = std::fs::read(out_a.join("predictor.json")).unwrap();
    let b = std::fs::read(out_b.join("predictor.json")).unwrap();
    assert_ne!(a, b, "a different seed must change the split");
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();

    // Missing config: validation -> 1.
    let out = run(&["calibrate"]);
    assert_eq!(out.status.code(), Some(1));

    // Unknown key: validation -> 1, mentioning the config path.
    let bad = dir.path().join("bad.json");
    write(&bad, r#"{"unknown_key": 1}"#);
    let out = run(&["calibrate", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("bad.json"), "stderr was: {stderr}");

    // Config referencing a missing dataset file: validation -> 1.
    let missing = serde_json::json!({
        "dataset": {"path": dir.path().join("nope.csv")},
        "scorer": {"kind": "knn-class", "k": 1},
        "confidence_levels": [0.9],
        "seed": 0,
        "output_dir": dir.path(),
    });
    let missing_path = dir.path().join("missing.json");
    write(&missing_path, &serde_json::to_string(&missing).unwrap());
    let out = run(&["calibrate", "--config", missing_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    // Malformed dataset contents: runtime -> 2.
    let data = dir.path().join("data.csv");
    write(&data, "x0,label\nnot-a-number,A\n");
    let runtime_cfg = serde_json::json!({
        "dataset": {"path": data},
        "scorer": {"kind": "knn-class", "k": 1},
        "confidence_levels": [0.9],
        "seed": 0,
        "output_dir": dir.path(),
    });
    let runtime_path = dir.path().join("runtime.json");
    write(&runtime_path, &serde_json::to_string(&runtime_cfg).unwrap());
    let out = run(&["calibrate", "--config", runtime_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("row 1"), "stderr was: {stderr}");
}

#[test]
fn drift_emits_json_lines_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "dataset": {"synthetic": {
            "family": "changepoint-stream",
            "length": 100, "change_index": 100,
            "pre_mean": 0.0, "pre_sd": 1.0, "post_mean": 0.0, "post_sd": 1.0,
            "seed": 3
        }},
        "scorer": {"kind": "knn-distance", "k": 5},
        "confidence_levels": [0.9],
        "monitor": {"betting": "mixture", "false_alarm_prob": 0.05},
        "seed": 5,
        "output_dir": dir.path(),
    });
    let config_path = dir.path().join("config.json");
    write(&config_path, &serde_json::to_string(&config).unwrap());

    // A stream from the same distribution, different seed.
    let stream = confaudit_core::data::generate(&confaudit_core::data::SyntheticSpec::ChangepointStream {
        length: 50,
        change_index: 50,
        pre_mean: 0.0,
        pre_sd: 1.0,
        post_mean: 0.0,
        post_sd: 1.0,
        seed: 11,
    })
    .unwrap();
    let stream_path = dir.path().join("stream.csv");
    confaudit_core::data::write(&stream, &stream_path).unwrap();

    let out = run(&[
        "drift",
        "--config",
        config_path.to_str().unwrap(),
        "--stream",
        stream_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let jsonl = std::fs::read_to_string(dir.path().join("drift.jsonl")).unwrap();
    let lines: Vec<&str> = jsonl.lines().collect();
    assert_eq!(lines.len(), 50);
    for (i, line) in lines.iter().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["n"], (i + 1) as u64);
        assert!(v["p"].as_f64().unwrap() > 0.0);
        assert!(v["log_martingale"].is_number());
        assert!(v["alarmed"].is_boolean());
    }
    // No drift on an exchangeable stream at threshold 20.
    let last: serde_json::Value = serde_json::from_str(lines[49]).unwrap();
    assert_eq!(last["alarmed"], false);
}

#[test]
fn anomaly_emits_verdicts_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "dataset": {"synthetic": {
            "family": "gaussian-classes",
            "n": 400, "classes": 2, "dim": 2,
            "separation": 1.0, "noise": 1.0, "seed": 2
        }},
        "scorer": {"kind": "knn-distance", "k": 5},
        "confidence_levels": [0.9],
        "split": {"train": 0.5, "calibration": 0.5},
        "anomaly": {"epsilon": 0.1},
        "seed": 6,
        "output_dir": dir.path(),
    });
    let config_path = dir.path().join("config.json");
    write(&config_path, &serde_json::to_string(&config).unwrap());

    // Two in-distribution points and one far outlier.
    let batch = dir.path().join("batch.csv");
    write(
        &batch,
        "example_id,x0,x1\nnear1,1.0,0.2\nnear2,-0.5,0.0\nfar,400.0,-400.0\n",
    );
    let out = run(&[
        "anomaly",
        "--config",
        config_path.to_str().unwrap(),
        "--input",
        batch.to_str().unwrap(),
    ]);
    assert_success(&out);

    let jsonl = std::fs::read_to_string(dir.path().join("anomaly.jsonl")).unwrap();
    let verdicts: Vec<serde_json::Value> = jsonl
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(verdicts.len(), 3);
    assert_eq!(verdicts[2]["example_id"], "far");
    assert_eq!(verdicts[2]["is_anomaly"], true);
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("anomaly_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["n"], 3);
    assert_eq!(summary["epsilon"], 0.1);
}

#[test]
fn audit_writes_reports_curves_and_subgroup_table() {
    let dir = tempfile::tempdir().unwrap();
    let taxonomy = serde_json::json!({
        "categories": [
            {"name": "majority", "all": [{"field": "region", "op": "==", "value": 0.0}]},
            {"name": "minority", "all": [{"field": "region", "op": "==", "value": 1.0}]}
        ]
    });
    let taxonomy_path = dir.path().join("taxonomy.json");
    write(&taxonomy_path, &serde_json::to_string_pretty(&taxonomy).unwrap());

    let config = serde_json::json!({
        "dataset": {"synthetic": {
            "family": "region-biased",
            "n": 3000, "dim": 2,
            "region_weights": [0.7, 0.3],
            "noise_scales": [1.0, 3.0],
            "seed": 12
        }},
        "scorer": {"kind": "residual-knn", "k": 5, "normalize": false},
        "method": ["icp", "mondrian", "ifacm"],
        "confidence_levels": [0.8, 0.9],
        "taxonomy_path": taxonomy_path,
        "split": {"train": 0.25, "calibration": 0.35, "tuning": 0.2},
        "seed": 9,
        "output_dir": dir.path(),
    });
    let config_path = dir.path().join("config.json");
    write(&config_path, &serde_json::to_string(&config).unwrap());

    let out = run(&["audit", "--config", config_path.to_str().unwrap()]);
    assert_success(&out);

    for method in ["icp", "mondrian", "ifacm"] {
        let report_path = dir.path().join(format!("report_{method}.json"));
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
        assert_eq!(report["method"], method);
        assert!(report["report"]["coverage"]["marginal"].as_f64().unwrap() > 0.5);
        let curve =
            std::fs::read_to_string(dir.path().join(format!("calibration_curve_{method}.csv")))
                .unwrap();
        assert!(curve.starts_with("level,coverage,binomial_p,n\n"));
        assert_eq!(curve.lines().count(), 3); // header + two levels
    }

    let table = std::fs::read_to_string(dir.path().join("subgroup_table.csv")).unwrap();
    assert!(table.starts_with("variant,subgroup,level,coverage,mean_set_size,flagged\n"));
    // 3 variants x 2 levels x 3 subgroups (majority, minority, rest).
    assert_eq!(table.lines().count(), 1 + 18);
    // The noisy minority must be flagged for plain ICP at level 0.8.
    let icp_minority: Vec<&str> = table
        .lines()
        .filter(|l| l.starts_with("icp,minority,0.8"))
        .collect();
    assert_eq!(icp_minority.len(), 1);
    assert!(icp_minority[0].ends_with("true"), "line: {icp_minority:?}");
}
