use std::path::Path;
use std::process::{Command, Output};

use serde_json::json;

fn attrflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attrflow"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn small_config(dir: &Path, acceptance: serde_json::Value) {
    let cfg = json!({
        "output_root": "out",
        "corpus": {"train_per_aspect": 120, "test_total": 30},
        "train": {"epochs": 1, "latent_dim": 4, "hidden_dim": 16, "embed_dim": 8},
        "latent_classifiers": {"epochs": 2, "hidden": 8},
        "eval_classifiers": {"epochs": 2},
        "solver": {"steps": 10},
        "acceptance": acceptance,
    });
    std::fs::write(dir.join("cfg.json"), cfg.to_string()).unwrap();
}

/// Backticked names in the first column of the table under `heading`.
fn documented_fields(heading: &str) -> Vec<String> {
    let doc = include_str!("../../../docs/report_schema.md");
    let section = doc.split(&format!("## {heading}\n")).nth(1).expect("section present");
    section
        .lines()
        .take_while(|l| !l.starts_with("## "))
        .filter_map(|l| l.strip_prefix("| `"))
        .map(|l| l.split('`').next().unwrap().to_string())
        .collect()
}

fn keys(v: &serde_json::Value) -> Vec<String> {
    v.as_object().expect("object").keys().cloned().collect()
}

#[test]
fn version_lists_format_versions() {
    let dir = tempfile::tempdir().unwrap();
    let out = attrflow(dir.path(), &["--version"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("format_version"), "{text}");
    assert!(text.contains("checkpoint"), "{text}");
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = attrflow(dir.path(), &["--config", "missing.json", "pipeline"]);
    assert_eq!(code(&out), 2);

    std::fs::write(dir.path().join("bad.json"), r#"{"output_root":"o","schema":"nope.json"}"#).unwrap();
    assert_eq!(code(&attrflow(dir.path(), &["--config", "bad.json", "gen-corpus"])), 2);

    std::fs::write(dir.path().join("typo.json"), r#"{"output_rot":"o"}"#).unwrap();
    assert_eq!(code(&attrflow(dir.path(), &["--config", "typo.json", "gen-corpus"])), 2);

    let out = attrflow(dir.path(), &["sample", "--ckpt", "nowhere.ckpt", "--attrs", "style=plain"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}

#[test]
fn pipeline_thresholds_and_stage_failures() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path(), json!({"min_mean_accuracy": 1.0, "min_attribute_accuracy": 0.0}));
    let out = attrflow(dir.path(), &["--config", "cfg.json", "pipeline"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold"));
    for rel in ["manifest.json", "checkpoints/cvae.ckpt", "corpus/vocab.json"] {
        assert!(dir.path().join("out").join(rel).is_file(), "{rel}");
    }

    let text = std::fs::read_to_string(dir.path().join("out/reports/report.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(keys(&report), documented_fields("Top-level fields"));
    assert_eq!(keys(&report["counts"]), documented_fields("`counts`"));
    assert_eq!(keys(&report["accuracy"][0]), documented_fields("`accuracy[]`"));
    assert_eq!(keys(&report["combinations"][0]), documented_fields("`combinations[]`"));
    assert_eq!(keys(&report["distinct"]["distinct_2"]), documented_fields("`distinct`"));
    assert!(report.get("config").unwrap().get("output_root").is_none());

    small_config(dir.path(), serde_json::Value::Null);
    let out = attrflow(dir.path(), &["--config", "cfg.json", "eval"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let ckpt = dir.path().join("out/checkpoints/cvae.ckpt");
    let mut text = std::fs::read_to_string(&ckpt).unwrap();
    text.insert(text.find('{').unwrap() + 1, ' ');
    std::fs::write(&ckpt, text).unwrap();
    let out = attrflow(dir.path(), &["--config", "cfg.json", "sample", "--attrs", "style=plain"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
