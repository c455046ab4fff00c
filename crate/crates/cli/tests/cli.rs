use std::path::{Path, PathBuf};
use std::process::Command;

use attverify::{OracleDocument, ResultsDocument, RunStatus};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn attverify(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_attverify")).args(args).output().unwrap()
}

fn worked_args(out: &Path) -> Vec<String> {
    vec![
        "--model".into(),
        fixture("worked_f.json").display().to_string(),
        "--image".into(),
        fixture("worked_x0.txt").display().to_string(),
        "--perturb".into(),
        "brightness:0..1".into(),
        "--out".into(),
        out.display().to_string(),
    ]
}

fn with<'a>(head: &[&'a str], rest: &'a [String]) -> Vec<&'a str> {
    head.iter().copied().chain(rest.iter().map(String::as_str)).collect()
}

#[test]
fn complete_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let args = worked_args(&out);
    let o = attverify(&with(&["verify", "--mode", "gbs-cr"], &args));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = ResultsDocument::load(&out).unwrap();
    assert_eq!(doc.status, RunStatus::Complete);
    assert_eq!(doc.regions.len(), 3);
}

#[test]
fn exhausted_budget_exits_two_with_partial_document() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let args = worked_args(&out);
    for limit in [&["--max-regions", "1"][..], &["--timeout", "0"][..]] {
        let o = attverify(&with(&[&["verify"][..], limit].concat(), &args));
        assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
        let doc = ResultsDocument::load(&out).unwrap();
        assert_eq!(doc.status, RunStatus::BudgetExhausted);
        assert!(doc.stats.budget_exhausted);
        assert!(doc.regions.len() <= 1);
    }
}

#[test]
fn errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let args = worked_args(&out);
    let o = attverify(&with(&["verify", "--mode", "gbs-ar", "--wdelta", "0"], &args));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config:"));
    assert!(!out.exists());
    let o = attverify(&["verify", "--perturb", "brightness:0..1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = attverify(&["verify", "--mode", "dfs"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("r.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "model": fixture("worked_f.json"),
            "image": fixture("worked_x0.txt"),
            "perturbation": "brightness:0..1",
        })
        .to_string(),
    )
    .unwrap();
    let o = attverify(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = ResultsDocument::load(&out).unwrap();
    assert_eq!((doc.problem.delta, doc.problem.w_delta), (3.0, 0.2));
}

#[test]
fn oracle_and_reconcile() {
    let dir = tempfile::tempdir().unwrap();
    let res = dir.path().join("r.json");
    let orc = dir.path().join("o.json");
    let o = attverify(&with(&["verify"], &worked_args(&res)));
    assert_eq!(o.status.code(), Some(0));
    let o = attverify(&with(&["oracle", "--resolution", "101"], &worked_args(&orc)));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(OracleDocument::load(&orc).unwrap().thetas.len(), 101);
    let o = attverify(&["reconcile", "--results", res.to_str().unwrap(), "--oracle", orc.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("mismatches 0"));
}
