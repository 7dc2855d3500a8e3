use std::fs;
use std::process::Command;

use lodadapt::field::read_field;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lodadapt"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn lists_presets() {
    let out = bin().arg("presets").output().unwrap();
    assert!(out.status.success());
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(s.lines().any(|l| l == "darcy2d-desk"));
}

#[test]
fn run_writes_artifacts_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"mesh": {"coarse": [4, 4], "refine": [4, 4]}, "k": [1, 2]}"#).unwrap();
    let out_dir = dir.path().join("out");
    let st = bin()
        .args(["run", "--preset", "kconv-desk", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .env("LODADAPT_THREADS", "2")
        .status()
        .unwrap();
    assert!(st.success());
    let errors = fs::read_to_string(out_dir.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 3);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["preset"], "kconv-desk");
    assert_eq!(meta["config"]["k"], serde_json::json!([1, 2]));
    assert!(meta["applied_defaults"].as_array().unwrap().iter().any(|x| x == "include_rhs_correction"));
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"experiment": "kconv", "unknown_key": 1}"#).unwrap();
    let st = bin().args(["run", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(2));
    fs::write(&cfg, "not json").unwrap();
    assert_eq!(bin().args(["run", "--config"]).arg(&cfg).status().unwrap().code(), Some(2));
    assert_eq!(bin().args(["run"]).status().unwrap().code(), Some(2));
    let big = bin().args(["run", "--preset", "kconv-paper", "--out"]).arg(dir.path().join("o")).status().unwrap();
    assert_eq!(big.code(), Some(2));
    let threads = bin().args(["presets"]).env("LODADAPT_THREADS", "zero").status().unwrap();
    assert_eq!(threads.code(), Some(2));
}

#[test]
fn gen_field_text_and_binary() {
    let dir = tempfile::tempdir().unwrap();
    for binary in [false, true] {
        let spec = dir.path().join("spec.json");
        fs::write(
            &spec,
            format!(r#"{{"mesh": {{"dim": 2, "coarse": [2, 2], "refine": [4, 4]}}, "field": {{"kind": "checkerboard_base", "seed": 3}}, "binary": {binary}}}"#),
        )
        .unwrap();
        let out = dir.path().join(format!("field_{binary}"));
        let st = bin().args(["gen-field", "--spec"]).arg(&spec).arg("--out").arg(&out).status().unwrap();
        assert!(st.success());
        let f = read_field(&out).unwrap();
        assert_eq!(f.counts, vec![8, 8]);
        assert_eq!(f.values.len(), 64);
    }
    // text and binary forms hold the same values
    let a = read_field(&dir.path().join("field_false")).unwrap();
    let b = read_field(&dir.path().join("field_true")).unwrap();
    assert_eq!(a, b);
}
