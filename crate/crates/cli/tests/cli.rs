//! Exit-code contract and subcommand smoke tests.

use std::fs;
use std::path::Path;
use std::process::Command;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_openset-eval")
}

fn run(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(binary())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

const TINY_GT: &str = r#"{
    "taxonomy": { "super_class": "T", "classes": ["a", "b", "c", "d"] },
    "images": [
        { "id": "i0", "width": 50, "height": 50 },
        { "id": "i1", "width": 50, "height": 50 },
        { "id": "i2", "width": 50, "height": 50 },
        { "id": "i3", "width": 50, "height": 50 }
    ],
    "annotations": [
        { "image_id": "i0", "class": "a", "box": [0, 0, 10, 10] },
        { "image_id": "i0", "class": "b", "box": [20, 0, 30, 10] },
        { "image_id": "i1", "class": "b", "box": [0, 0, 10, 10] },
        { "image_id": "i1", "class": "c", "box": [20, 0, 30, 10] },
        { "image_id": "i2", "class": "c", "box": [0, 0, 10, 10] },
        { "image_id": "i2", "class": "d", "box": [20, 0, 30, 10] },
        { "image_id": "i3", "class": "d", "box": [0, 0, 10, 10] },
        { "image_id": "i3", "class": "a", "box": [20, 0, 30, 10] }
    ]
}"#;

#[test]
fn validate_ok_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("gt.json"), TINY_GT).unwrap();
    let out = run(tmp.path(), &["validate", "--dataset", "gt.json"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ok: 4 images"), "stdout: {stdout}");
}

#[test]
fn missing_input_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["validate", "--dataset", "nope.json"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nope.json"), "stderr: {stderr}");
}

#[test]
fn malformed_document_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("gt.json"), "{ not json").unwrap();
    let out = run(tmp.path(), &["validate", "--dataset", "gt.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_missing_detections_exits_one_naming_file() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("gt.json"), TINY_GT).unwrap();
    let split = r#"{
        "known": ["a"], "unknown": { "u": ["b"] },
        "train": ["i0"], "val": [], "test": ["i1"],
        "provenance": { "method": "fixture" }
    }"#;
    fs::write(tmp.path().join("split.json"), split).unwrap();
    let manifest = r#"{
        "dataset": "gt.json",
        "splits": ["split.json"],
        "methods": [ { "name": "m", "detections": "absent.json", "kind": "labeled" } ]
    }"#;
    fs::write(tmp.path().join("manifest.json"), manifest).unwrap();
    let out = run(
        tmp.path(),
        &["eval", "--manifest", "manifest.json", "--out", "o"],
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("absent.json"), "stderr: {stderr}");
}

#[test]
fn numeric_failure_exits_two() {
    // one annotation per image: no class ever co-occurs with another, the
    // co-occurrence graph has no edges, and the spectral cut is undefined
    let gt = r#"{
        "taxonomy": { "super_class": "T", "classes": ["a", "b", "c"] },
        "images": [
            { "id": "i0", "width": 50, "height": 50 },
            { "id": "i1", "width": 50, "height": 50 },
            { "id": "i2", "width": 50, "height": 50 }
        ],
        "annotations": [
            { "image_id": "i0", "class": "a", "box": [0, 0, 10, 10] },
            { "image_id": "i1", "class": "b", "box": [0, 0, 10, 10] },
            { "image_id": "i2", "class": "c", "box": [0, 0, 10, 10] }
        ]
    }"#;
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("gt.json"), gt).unwrap();
    let out = run(
        tmp.path(),
        &[
            "gen-splits",
            "--method",
            "ncut",
            "--k",
            "2",
            "--dataset",
            "gt.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no edges"), "stderr: {stderr}");
}

#[test]
fn gen_splits_random_writes_k_files() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("gt.json"), TINY_GT).unwrap();
    let out = run(
        tmp.path(),
        &[
            "gen-splits",
            "--method",
            "random",
            "--k",
            "2",
            "--dataset",
            "gt.json",
            "--seed",
            "3",
            "--ratios",
            "0.5,0.25,0.25",
            "--out",
            "s",
        ],
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(tmp.path().join("s/split1.json").exists());
    assert!(tmp.path().join("s/split2.json").exists());
}

#[test]
fn baseline_writes_labeled_file() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("gt.json"), TINY_GT).unwrap();
    let split = r#"{
        "known": ["a", "b"], "unknown": { "u": ["c", "d"] },
        "train": ["i0"], "val": [], "test": ["i1", "i2"],
        "provenance": { "method": "fixture" }
    }"#;
    fs::write(tmp.path().join("split.json"), split).unwrap();
    let raw = r#"{ "detections": [
        { "image_id": "i1", "box": [0, 0, 10, 10], "scores": [0.9, 0.1],
          "value_kind": "probabilities", "head_kind": "sigmoid" },
        { "image_id": "i2", "box": [0, 0, 10, 10], "scores": [0.5, 0.45],
          "value_kind": "probabilities", "head_kind": "sigmoid" }
    ] }"#;
    fs::write(tmp.path().join("raw.json"), raw).unwrap();
    let out = run(
        tmp.path(),
        &[
            "baseline",
            "--gamma",
            "2.0",
            "--top-m",
            "2",
            "--raw",
            "raw.json",
            "--dataset",
            "gt.json",
            "--split",
            "split.json",
            "--out",
            "labeled.json",
        ],
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(tmp.path().join("labeled.json")).unwrap();
    assert!(text.contains("\"label\": \"a\""), "{text}");
    assert!(text.contains("\"label\": \"unknown\""), "{text}");
}
