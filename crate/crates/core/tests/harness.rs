use std::path::Path;

use hiercontrol::harness::{
    execute, resolve_scenario, run, Cli, Command, EXIT_CONFIG, EXIT_INVARIANT, EXIT_NONCONVERGENCE, EXIT_OK,
};
use hiercontrol::scenario::ScenarioConfig;

use clap::Parser;

fn argv(cmd: &str, out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v = vec!["hiercontrol".to_string(), cmd.to_string(), "--out".into(), out.display().to_string()];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut ScenarioConfig)) -> String {
    let mut cfg = ScenarioConfig::reference();
    edit(&mut cfg);
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.display().to_string()
}

#[test]
fn weights_check_succeeds_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(run(argv("weights-check", &out, &[])), EXIT_OK);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "weights-check");
    assert_eq!(report["passed"], true);
    assert!(report["timings"]["total"].as_f64().unwrap() >= 0.0);
    let csv = std::fs::read_to_string(out.join("weights.csv")).unwrap();
    assert!(csv.lines().count() > 100);
}

#[test]
fn linear_control_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(argv("control-linear", dir.path(), &[])), EXIT_OK);
}

#[test]
fn configuration_errors_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), |c| c.gamma = 1.2);
    assert_eq!(run(argv("simulate", dir.path(), &["--config", &bad])), EXIT_CONFIG);
    let missing = dir.path().join("nope.json").display().to_string();
    assert_eq!(run(argv("simulate", dir.path(), &["--config", &missing])), EXIT_CONFIG);
    assert_eq!(run(argv("no-such-command", dir.path(), &[])), EXIT_CONFIG);
    assert_eq!(run(argv("simulate", dir.path(), &["--s", "not-a-number"])), EXIT_CONFIG);
}

#[test]
fn failed_checks_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(argv("control-linear", dir.path(), &["--null-tol", "1e-300"])), EXIT_INVARIANT);
}

#[test]
fn solver_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |c| c.solver.cg_max_iter = 2);
    assert_eq!(run(argv("control-linear", dir.path(), &["--config", &cfg])), EXIT_NONCONVERGENCE);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["results"]["error_class"], "non-convergence");
}

#[test]
fn overrides_reach_the_scenario() {
    let cli =
        Cli::try_parse_from(["hiercontrol", "simulate", "--seed", "7", "--cg-tol", "1e-7", "--lambda", "5"]).unwrap();
    let sc = resolve_scenario(&cli.options).unwrap();
    assert_eq!(sc.config.seed, 7);
    assert_eq!(sc.config.solver.cg_tol, 1e-7);
    assert_eq!(sc.config.carleman.lambda, Some(5.0));
}

#[test]
fn repeated_runs_give_identical_reports() {
    let cli = Cli::try_parse_from(["hiercontrol", "nash"]).unwrap();
    let sc = resolve_scenario(&cli.options).unwrap();
    for cmd in [Command::Nash, Command::ControlLinear, Command::WeightsCheck] {
        let a = execute(cmd, &sc, &cli.options);
        let b = execute(cmd, &sc, &cli.options);
        assert!(a.report.passed, "{}", cmd.name());
        assert_eq!(a.report.reproducible_json(), b.report.reproducible_json(), "{}", cmd.name());
    }
}

#[test]
fn different_seeds_change_the_report() {
    let a = Cli::try_parse_from(["hiercontrol", "nash", "--seed", "1"]).unwrap();
    let b = Cli::try_parse_from(["hiercontrol", "nash", "--seed", "2"]).unwrap();
    let ra = execute(Command::Nash, &resolve_scenario(&a.options).unwrap(), &a.options);
    let rb = execute(Command::Nash, &resolve_scenario(&b.options).unwrap(), &b.options);
    assert_ne!(ra.report.scenario_sha256, rb.report.scenario_sha256);
    assert_ne!(ra.report.reproducible_json(), rb.report.reproducible_json());
}
