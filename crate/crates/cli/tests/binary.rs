use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hiercontrol"))
}

#[test]
fn prints_a_json_report_and_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["weights-check", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["command"], "weights-check");
    assert_eq!(report["passed"], true);
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("weights.csv").exists());
}

#[test]
fn stdout_reports_match_apart_from_timings() {
    let strip = |bytes: &[u8]| {
        let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
        v.as_object_mut().unwrap().remove("timings");
        v
    };
    let dir = tempfile::tempdir().unwrap();
    let a = bin().args(["simulate", "--seed", "3", "--out"]).arg(dir.path().join("a")).output().unwrap();
    let b = bin().args(["simulate", "--seed", "3", "--out"]).arg(dir.path().join("b")).output().unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(strip(&a.stdout), strip(&b.stdout));
}

#[test]
fn bad_arguments_exit_with_four() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\"t_final\": -1}").unwrap();
    let out = bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in
        ["simulate", "nash", "control-linear", "control-nonlinear", "weights-check", "convergence-study", "certify"]
    {
        assert!(text.contains(cmd), "{cmd}");
    }
}
