//! End-to-end runs of the binary: synth, train, eval, export, theory.

use std::path::Path;
use std::process::Command;

fn localmax(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_localmax"))
        .args(args)
        .output()
        .expect("spawn localmax")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn synth_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gmm");
    let res = localmax(&[
        "synth", "gmm", "--n", "64", "--seed", "7",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(out.join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 65);
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["n"], 64);
    assert_eq!(manifest["centers"].as_array().unwrap().len(), 16);
}

#[test]
fn train_then_eval_and_export() {
    let dir = tempfile::tempdir().unwrap();

    let gmm = dir.path().join("gmm");
    assert!(localmax(&["synth", "gmm", "--n", "128", "--seed", "3", "--out", gmm.to_str().unwrap()])
        .status
        .success());
    let bg = dir.path().join("bg");
    assert!(localmax(&["synth", "background", "--n", "64", "--seed", "4", "--out", bg.to_str().unwrap()])
        .status
        .success());

    let cfg_path = dir.path().join("train.json");
    std::fs::write(
        &cfg_path,
        r#"{"epochs": 2, "hidden": [8], "generator_hidden": [8]}"#,
    )
    .unwrap();
    let run = dir.path().join("run");
    let data = gmm.join("data.csv");
    let res = localmax(&[
        "train",
        "--config", cfg_path.to_str().unwrap(),
        "--data", data.to_str().unwrap(),
        "--out", run.to_str().unwrap(),
        "--seed", "11",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(run.join("config.json").is_file());
    assert!(run.join("log.jsonl").is_file());
    let ckpt = run.join("checkpoints/final.ckpt");
    assert!(ckpt.is_file());

    let eval = dir.path().join("oneclass");
    let res = localmax(&[
        "eval-oneclass",
        "--checkpoint", ckpt.to_str().unwrap(),
        "--pos", data.to_str().unwrap(),
        "--neg", bg.join("data.csv").to_str().unwrap(),
        "--score", "c",
        "--out", eval.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let metrics = read_json(&eval.join("metrics.json"));
    let auc = metrics["metrics"]["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));

    let field = dir.path().join("field");
    let res = localmax(&[
        "export-field",
        "--checkpoint", ckpt.to_str().unwrap(),
        "--resolution", "16",
        "--out", field.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let heatmap = std::fs::read_to_string(field.join("heatmap.csv")).unwrap();
    assert_eq!(heatmap.lines().count(), 1 + 16 * 16);
}

#[test]
fn theory_construct_reports_four_pieces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("theory");
    let res = localmax(&[
        "theory", "construct", "--points", "0,1", "--verify",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let metrics = read_json(&out.join("metrics.json"));
    assert_eq!(metrics["pieces"], 4);
    assert_eq!(metrics["passed"], true);
    assert_eq!(metrics["maxima"], serde_json::json!([0.0, 1.0]));
}

#[test]
fn bad_variant_is_user_error_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let res = localmax(&[
        "train",
        "--variant", "bogus",
        "--out", dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn missing_checkpoint_is_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let res = localmax(&[
        "export-field",
        "--checkpoint", dir.path().join("nope.ckpt").to_str().unwrap(),
        "--out", dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
}
