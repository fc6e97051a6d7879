use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

fn refiner(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refiner")).args(args).env_remove("REFINER_API_TOKEN").output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn optimize_with_mock_scenario_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = refiner(&[
        "optimize",
        fixture("token_key.dsol").to_str().unwrap(),
        "--scenario",
        fixture("scenarios/token_key.json").to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let refined = std::fs::read_to_string(dir.path().join("token_key.dsol")).unwrap();
    assert!(refined.contains("mapping(bytes32=>uint256) uintStorage;"));
    assert!(dir.path().join("token_key.report.json").exists());
    assert!(text(&out.stdout).contains("token_key:"));
}

#[test]
fn verify_reports_the_bad_optimization() {
    let out = refiner(&["verify", fixture("ecrecover_original.dsol").to_str().unwrap(), fixture("ecrecover_optimized.dsol").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("NonEquivalent"), "{}", text(&out.stdout));
}

#[test]
fn verify_json_is_parseable() {
    let f = fixture("token_key.dsol");
    let out = refiner(&["verify", f.to_str().unwrap(), f.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.is_object());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(refiner(&["--bogus"]).status.code(), Some(2));
    assert_eq!(refiner(&["optimize"]).status.code(), Some(2));
    assert_eq!(refiner(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_a_hard_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = refiner(&["analyze", "does/not/exist.dsol", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let line = text(&out.stderr);
    let first: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(first["level"], "ERROR");
}

#[test]
fn analyze_writes_graph_exports() {
    let dir = tempfile::tempdir().unwrap();
    let out = refiner(&["analyze", fixture("token_key.dsol").to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for ext in ["ir.txt", "cfg.txt", "dfg.txt", "dg.txt", "dg.json"] {
        assert!(dir.path().join(format!("token_key.{ext}")).exists(), "{ext}");
    }
}

#[test]
fn score_prints_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = refiner(&[
        "optimize",
        fixture("token_key.dsol").to_str().unwrap(),
        "--scenario",
        fixture("scenarios/token_key.json").to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = dir.path().join("token_key.report.json");
    let out = refiner(&["score", "--report", report.to_str().unwrap(), "--truth", fixture("truth/token_key.json").to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.get("boundary").is_some());
}

#[test]
fn auth_token_never_reaches_the_log() {
    let token = "stor_tok_9f8e7d";
    let dir = tempfile::tempdir().unwrap();
    let unit = dir.path().join("leak.dsol");
    std::fs::write(&unit, format!("uint256 {token};\n\nfunction set(uint256 varg0) public {{\n    {token} = varg0;\n}}\n")).unwrap();
    let scenario = dir.path().join("s.json");
    std::fs::write(&scenario, r#"{"*": ["```json\n[]\n```"]}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_refiner"))
        .args(["-vvv", "optimize", unit.to_str().unwrap(), "--scenario", scenario.to_str().unwrap(), "-o"])
        .arg(dir.path().join("out"))
        .env("REFINER_API_TOKEN", token)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let log = text(&out.stderr);
    assert!(log.contains("[REDACTED]"), "prompt trace should have been scrubbed:\n{log}");
    assert!(!log.contains(token));
}
