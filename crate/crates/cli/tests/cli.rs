use std::path::PathBuf;
use std::process::{Command, Output};

fn repo(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(path)
}

fn acw(args: &[&str], out: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acw"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("ACW_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn hash_audit_passes_and_writes_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let o = acw(&["hash-audit", "--seed", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS hash-audit/strong-universality/m4"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 3);
    assert!(std::fs::read_to_string(dir.path().join("records.csv")).unwrap().starts_with("id,suite,metric"));
}

#[test]
fn json_only_format() {
    let dir = tempfile::tempdir().unwrap();
    let o = acw(&["bounds", "--format", "json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("report.json").exists() && !dir.path().join("records.csv").exists());
}

#[test]
fn planted_bug_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo("configs/negative-control.json");
    let o = acw(&["composition", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL composition/fixture/broken"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"suites\": 4").unwrap();
    assert_eq!(acw(&["entropy", "--config", bad.to_str().unwrap()], dir.path()).status.code(), Some(2));
    assert_eq!(acw(&["lemmas", "--tolerance", "-1"], dir.path()).status.code(), Some(2));
    assert_eq!(acw(&["fsauth", "run"], dir.path()).status.code(), Some(2));
    assert_eq!(acw(&["no-such-command"], dir.path()).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_acw")).arg("entropy").arg("--out").arg(dir.path()).env("ACW_WORKERS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn distill_config_runs_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo("configs/distill-adversarial.json");
    let o = acw(&["distill", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS distill/config/final-distance"));
}

#[test]
fn fsauth_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let noise = repo("configs/session-noise.json");
    let o = acw(&["fsauth", "run", "--config", noise.to_str().unwrap(), "--trials", "500"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("sessions.json")).unwrap()).unwrap();
    assert_eq!(doc["transcripts"].as_array().unwrap().len(), 500);
    for attack in ["configs/session-substitution.json", "configs/session-impersonation.json"] {
        let o = acw(&["fsauth", "attack", "--config", repo(attack).to_str().unwrap(), "--trials", "500"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        assert!(stdout(&o).starts_with("PASS forgery-rate"));
    }
    // an attack config is refused by `run`
    let o = acw(&["fsauth", "run", "--config", repo("configs/session-substitution.json").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["report", "--seed", "17", "--trials", "2000"];
    let (oa, ob) = (acw(&args, a.path()), acw(&args, b.path()));
    assert_eq!(oa.status.code(), Some(0), "{}", stdout(&oa));
    let hash = |o: &Output| stdout(o).lines().find(|l| l.starts_with("determinism-hash")).unwrap().to_string();
    assert_eq!(hash(&oa), hash(&ob));
    let strip = |d: &std::path::Path| {
        let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("report.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("runtime_ms");
        v
    };
    assert_eq!(strip(a.path()), strip(b.path()));
}
