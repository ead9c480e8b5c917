//! Command-line driver: argument parsing, experiment orchestration and the
//! JSON/CSV reports.
//!
//! Every command writes `report.json` (and command-specific CSV files) into
//! `--out` and prints the same JSON to stdout. Wall-clock timings live under
//! their own `timings` key so the rest of the report is reproducible bit for
//! bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::checks::Check;
use crate::control::{solve_linear_control, verify_weighted_estimates, LinearData};
use crate::error::{Error, ErrorClass, Result};
use crate::exec::Exec;
use crate::grid::{Grid, SpaceTimeField};
use crate::hierarchy::{certify_result, controllability_radius, liusternik_solve, HierarchyResult};
use crate::nash::{directional_gradient, estimate_convexity_threshold, solve_nash, test_directions, RANDOM_DIRECTIONS};
use crate::scenario::{load_scenario, Scenario, ScenarioConfig};
use crate::solvers::{coupled_energy_check, linear_energy_check, solve_forward_nonlocal, ControlTriple};
use crate::study::{convergence_study, StudyMode};
use crate::weights::{check_comparison_bound, weights_for};

pub const REPORT_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "hiercontrol",
    version,
    about = "Hierarchical null control of a degenerate nonlocal parabolic equation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Uncontrolled nonlocal forward solve and its energy estimate.
    Simulate,
    /// Follower equilibrium for a zero leader, its certificate and the
    /// empirical convexity threshold.
    Nash,
    /// Linearized null control by the weighted Lax-Milgram construction.
    ControlLinear,
    /// Nonlinear hierarchy by the frozen-derivative iteration, plus the
    /// empirical controllability radius.
    ControlNonlinear,
    /// Carleman weight identities and comparison constants.
    WeightsCheck,
    /// Manufactured-solution convergence orders.
    ConvergenceStudy,
    /// Nonlinear solve followed by the refined-grid certificate.
    Certify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Nash => "nash",
            Command::ControlLinear => "control-linear",
            Command::ControlNonlinear => "control-nonlinear",
            Command::WeightsCheck => "weights-check",
            Command::ConvergenceStudy => "convergence-study",
            Command::Certify => "certify",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Scenario JSON; the built-in reference scenario when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Carleman parameter `s`.
    #[arg(long, global = true)]
    pub s: Option<f64>,
    /// Carleman parameter `lambda`.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long = "cg-tol", global = true)]
    pub cg_tol: Option<f64>,
    #[arg(long = "null-tol", global = true)]
    pub null_tol: Option<f64>,
    /// Levels of the convergence study.
    #[arg(long, global = true, default_value_t = 3)]
    pub levels: usize,
}

/// Machine-readable result of one command.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub report_version: u32,
    pub command: String,
    pub scenario_sha256: String,
    pub seed: u64,
    /// Configuration after defaults and command-line overrides.
    pub config: ScenarioConfig,
    pub results: Value,
    pub checks: Vec<Check>,
    pub passed: bool,
    /// Outcome class when the command failed.
    pub error: Option<String>,
    /// Wall seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    /// The report without timings, serialized; equal for repeated runs.
    pub fn reproducible_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Value::Object(m) = &mut v {
            m.remove("timings");
        }
        v.to_string()
    }

    pub fn exit_code(&self) -> i32 {
        match &self.error {
            Some(_) => EXIT_NONCONVERGENCE,
            None if self.passed => EXIT_OK,
            None => EXIT_INVARIANT,
        }
    }
}

/// Output of one command before it is wrapped into a [`RunReport`].
struct Outcome {
    results: Value,
    checks: Vec<Check>,
    tables: Vec<(String, Table)>,
}

/// CSV table: header and rows.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

struct Timer(BTreeMap<String, f64>);

impl Timer {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.insert(phase.to_string(), start.elapsed().as_secs_f64());
        out
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let scenario = match resolve_scenario(&cli.options) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return EXIT_CONFIG;
        }
    };
    let run = execute(cli.command, &scenario, &cli.options);
    let code = run.report.exit_code();
    match write_outputs(&run, &cli.options.out) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    }
    println!("{}", serde_json::to_string_pretty(&run.report).expect("report serializes"));
    code
}

/// Scenario from `--config` (or the reference problem) with the
/// command-line overrides applied.
pub fn resolve_scenario(options: &Options) -> Result<Scenario> {
    let mut cfg = match &options.config {
        Some(path) => load_scenario(path)?.config,
        None => ScenarioConfig::reference(),
    };
    if let Some(seed) = options.seed {
        cfg.seed = seed;
    }
    if options.s.is_some() {
        cfg.carleman.s = options.s;
    }
    if options.lambda.is_some() {
        cfg.carleman.lambda = options.lambda;
    }
    if let Some(t) = options.cg_tol {
        cfg.solver.cg_tol = t;
    }
    if let Some(t) = options.null_tol {
        cfg.solver.null_tol = t;
    }
    Scenario::from_config(cfg)
}

pub fn scenario_hash(config: &ScenarioConfig) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Report and CSV tables of one command.
pub struct Run {
    pub report: RunReport,
    pub tables: Vec<(String, Table)>,
}

/// Runs one command on a resolved scenario. Solver failures are recorded in
/// the report's `error` field.
pub fn execute(command: Command, scenario: &Scenario, options: &Options) -> Run {
    let mut timer = Timer(BTreeMap::new());
    let outcome = timer.time("total", || match command {
        Command::Simulate => simulate(scenario),
        Command::Nash => nash(scenario),
        Command::ControlLinear => control_linear(scenario),
        Command::ControlNonlinear => control_nonlinear(scenario),
        Command::WeightsCheck => weights_check(scenario),
        Command::ConvergenceStudy => convergence(scenario, options.levels),
        Command::Certify => certify(scenario),
    });
    let (results, checks, error, tables) = match outcome {
        Ok(o) => (o.results, o.checks, None, o.tables),
        Err(e) => {
            let class = match e.class() {
                ErrorClass::Config => "config",
                ErrorClass::NonConvergence => "non-convergence",
                ErrorClass::Numerical => "numerical",
            };
            (json!({ "error_class": class, "message": e.to_string() }), vec![], Some(e.to_string()), vec![])
        }
    };
    let passed = error.is_none() && checks.iter().all(|c| c.passed);
    let report = RunReport {
        report_version: REPORT_VERSION,
        command: command.name().to_string(),
        scenario_sha256: scenario_hash(&scenario.config),
        seed: scenario.config.seed,
        config: scenario.config.clone(),
        results,
        checks,
        passed,
        error,
        timings: timer.0,
    };
    Run { report, tables }
}

/// Writes `report.json` and the CSV tables into `out`.
pub fn write_outputs(run: &Run, out: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::Output(format!("{}: {e}", out.display()));
    fs::create_dir_all(out).map_err(io)?;
    let text = serde_json::to_string_pretty(&run.report).map_err(|e| Error::Output(e.to_string()))?;
    fs::write(out.join("report.json"), text).map_err(io)?;
    for (name, table) in &run.tables {
        write_csv(&out.join(name), table)?;
    }
    Ok(())
}

pub fn write_csv(path: &Path, table: &Table) -> Result<()> {
    let err = |e: csv::Error| Error::Output(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(&table.header).map_err(err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))
}

/// Long-format table `t, x, <name>...` of fields with state-type rows.
/// Adjoint-type fields are shifted so that each row is reported at the left
/// end of its interval.
fn field_table(grid: &Grid, fields: &[(&str, &SpaceTimeField)]) -> Table {
    let mut header = vec!["t".to_string(), "x".to_string()];
    header.extend(fields.iter().map(|(n, _)| n.to_string()));
    let mut rows = Vec::with_capacity(grid.n_nodes() * (grid.m_steps + 1));
    for (n, &t) in grid.times().iter().enumerate() {
        for (j, &x) in grid.nodes().iter().enumerate() {
            let mut row = vec![t, x];
            row.extend(fields.iter().map(|(_, f)| f.get(n, j)));
            rows.push(row);
        }
    }
    Table { header, rows }
}

fn simulate(sc: &Scenario) -> Result<Outcome> {
    let grid = &sc.grid;
    let controls = ControlTriple::zeros(grid);
    let sol = solve_forward_nonlocal(&sc.y0, &controls, sc)?;
    let coeff_min = sol.g.iter().map(|&g| sc.l_law.value(g)).fold(f64::INFINITY, f64::min);
    let energy = linear_energy_check(&sol.y, &SpaceTimeField::zeros(grid), coeff_min, sc);
    let last = sol.y.row(grid.m_steps);
    let checks = vec![Check::holds("energy estimate", energy.passed)];
    Ok(Outcome {
        results: json!({
            "final_norm": crate::quadrature::inner(last, last, grid.h).sqrt(),
            "max_abs": sol.y.max_abs(),
            "picard_iterations": sol.picard_iterations,
            "energy": energy,
        }),
        checks,
        tables: vec![("fields.csv".into(), field_table(grid, &[("y", &sol.y)]))],
    })
}

fn nash(sc: &Scenario) -> Result<Outcome> {
    let grid = &sc.grid;
    let cert = solve_nash(&SpaceTimeField::zeros(grid), sc)?;
    let energy = coupled_energy_check(&cert.solution, sc);
    let threshold = estimate_convexity_threshold(sc, 3)?;
    let mut checks = Vec::new();
    for i in 0..2 {
        checks.push(Check::at_most(
            &format!("first-order gap {}", i + 1),
            cert.duality_gap[i],
            1e-6 * cert.scale[i].max(f64::MIN_POSITIVE),
        ));
    }
    checks.push(Check::holds("energy estimate", energy.passed));
    checks.push(Check::holds("convexity threshold found", !threshold.not_found));
    let (v1, v2) = (&cert.controls.v[0], &cert.controls.v[1]);
    Ok(Outcome {
        results: json!({
            "fixed_point_iterations": cert.solution.iterations,
            "fixed_point_residual": cert.solution.residual,
            "duality_gap": cert.duality_gap,
            "gap_scale": cert.scale,
            "hessian_rayleigh": cert.hessian_rayleigh,
            "functionals": cert.functionals,
            "energy": energy,
            "convexity_threshold": threshold,
        }),
        checks,
        tables: vec![("fields.csv".into(), field_table(grid, &[("y", cert.solution.y()), ("v1", v1), ("v2", v2)]))],
    })
}

fn control_linear(sc: &Scenario) -> Result<Outcome> {
    let grid = &sc.grid;
    let (_, _, ws) = weights_for(sc)?;
    let data = LinearData::from_scenario(sc);
    let r = solve_linear_control(&data, &ws, sc)?;
    let y0 = crate::quadrature::inner(&sc.y0, &sc.y0, grid.h).sqrt();
    Ok(Outcome {
        results: json!({
            "s": ws.s,
            "lambda": ws.lambda,
            "final_norm": r.final_norm,
            "relative_final_norm": if y0 > 0.0 { r.final_norm / y0 } else { r.final_norm },
            "cg_iterations": r.cg.iterations,
            "cg_residual": r.cg.residual,
            "cg_energy_monotone": r.cg.energy_monotone,
            "kappa0": r.kappa0,
            "kappa1": r.kappa1,
            "weighted_estimates": r.weighted,
            "transposition_gap": r.transposition_gap,
            "transposition_bound": r.transposition_bound,
            "control_norm": r.h.masked(&sc.masks.o).norm_q_left(grid),
        }),
        checks: r.checks.clone(),
        tables: vec![(
            "fields.csv".into(),
            field_table(grid, &[("y", &r.y), ("h", &r.h), ("p1", &r.p[0]), ("p2", &r.p[1])]),
        )],
    })
}

fn nash_gaps(controls: &ControlTriple, sc: &Scenario) -> Result<[f64; 2]> {
    let mut gaps = [0.0; 2];
    for (i, gap) in gaps.iter_mut().enumerate() {
        for dir in test_directions(i, RANDOM_DIRECTIONS, sc.config.seed, sc) {
            *gap = f64::max(*gap, directional_gradient(i, &dir, controls, sc)?.abs());
        }
    }
    Ok(gaps)
}

fn hierarchy_json(r: &HierarchyResult) -> Value {
    json!({
        "outer_iterations": r.outer_iterations,
        "residual_history": r.history,
        "contraction": r.contraction,
        "max_contraction": r.max_contraction(),
        "cg_iterations": r.cg_iterations,
        "final_norm": r.final_norm,
        "final_norm_reconstructed": r.final_norm_reconstructed,
        "delta": r.delta,
    })
}

fn hierarchy_table(r: &HierarchyResult, grid: &Grid) -> Table {
    field_table(grid, &[("y", &r.state.y), ("h", &r.state.h), ("v1", &r.v[0]), ("v2", &r.v[1])])
}

fn null_check(r: &HierarchyResult, sc: &Scenario) -> Check {
    let grid = &sc.grid;
    let y0 = crate::quadrature::inner(&sc.y0, &sc.y0, grid.h).sqrt();
    Check::at_most("||y(T)|| <= null_tol ||y0||", r.final_norm, sc.config.solver.null_tol * y0)
}

fn control_nonlinear(sc: &Scenario) -> Result<Outcome> {
    let cfg = sc.config.solver;
    let r = liusternik_solve(sc, cfg.outer_max_iter, cfg.outer_tol)?;
    let gaps = nash_gaps(&r.state.controls(sc), sc)?;
    let radius = controllability_radius(sc, 1.0, 6, 3, cfg.outer_max_iter.min(15), cfg.outer_tol)?;
    let mut results = hierarchy_json(&r);
    results["nash_gaps"] = json!(gaps);
    results["radius"] = json!(radius);
    let checks = vec![
        null_check(&r, sc),
        Check::at_most("max contraction < 1", r.max_contraction(), 1.0),
        Check::holds("radius positive", radius.delta_star > 0.0),
    ];
    Ok(Outcome { results, checks, tables: vec![("fields.csv".into(), hierarchy_table(&r, &sc.grid))] })
}

fn certify(sc: &Scenario) -> Result<Outcome> {
    let cfg = sc.config.solver;
    let r = liusternik_solve(sc, cfg.outer_max_iter, cfg.outer_tol)?;
    let cert = certify_result(&r, sc)?;
    let mut checks = vec![null_check(&r, sc)];
    checks.extend(cert.checks.iter().cloned());
    let mut results = hierarchy_json(&r);
    results["certificate"] = json!(cert);
    Ok(Outcome { results, checks, tables: vec![("fields.csv".into(), hierarchy_table(&r, &sc.grid))] })
}

fn weights_check(sc: &Scenario) -> Result<Outcome> {
    let (psi, cap, ws) = weights_for(sc)?;
    let report = ws.check_invariants();
    let comparison = check_comparison_bound(&ws);
    let mut checks = report.checks.clone();
    checks.push(Check::holds("weight comparison constants finite", comparison.passed));
    checks.push(Check::at_most("psi junction mismatch", psi.junction_mismatch(), 1e-10));
    let log = |v: &crate::extreal::ExtReal| v.log10();
    let rows = (0..ws.len())
        .map(|n| {
            vec![
                ws.times[n],
                ws.tau[n],
                cap.m[n],
                ws.a_star[n],
                ws.a_hat[n],
                log(&ws.rho0[n]),
                log(&ws.rho1[n]),
                log(&ws.rho2[n]),
                log(&ws.rho_hat[n]),
            ]
        })
        .collect();
    let header = ["t", "tau", "m", "a_star", "a_hat", "log10_rho0", "log10_rho1", "log10_rho2", "log10_rho_hat"];
    Ok(Outcome {
        results: json!({
            "s": ws.s,
            "lambda": ws.lambda,
            "psi_inf": ws.psi_inf,
            "nu_bar": ws.nu_bar,
            "nu_min": ws.nu_min,
            "zeta0": ws.zeta0,
            "big_m": ws.big_m,
            "ordering_constant": report.ordering_constant,
            "identity_max_rel_error": report.identity_max_rel_error,
            "zeta_ratio_max_rel_error": report.zeta_ratio_max_rel_error,
            "comparison": comparison,
            "cap_c1_jump": cap.c1_jump(),
        }),
        checks,
        tables: vec![("weights.csv".into(), Table { header: header.iter().map(|s| s.to_string()).collect(), rows })],
    })
}

fn convergence(sc: &Scenario, levels: usize) -> Result<Outcome> {
    let cfg = &sc.config;
    let exec = Exec::default();
    let combined =
        convergence_study(cfg.gamma, cfg.t_final, cfg.n_interior, cfg.m_steps, levels, StudyMode::Combined, exec)?;
    let spatial = convergence_study(
        cfg.gamma,
        cfg.t_final,
        cfg.n_interior,
        cfg.m_steps,
        levels,
        StudyMode::SpatialOnly { m_steps: cfg.m_steps },
        exec,
    )?;
    let checks = vec![
        Check::holds("combined errors decrease", combined.monotone),
        Check::holds("spatial errors decrease", spatial.monotone),
        Check::at_least("combined order >= 1", combined.min_order_l2, 1.0),
        Check::at_least("spatial order >= 1.5", spatial.min_order_l2, 1.5),
    ];
    let table = |t: &crate::study::ConvergenceTable, tag: f64| {
        t.rows
            .iter()
            .map(|r| vec![tag, r.n_interior as f64, r.m_steps as f64, r.h, r.dt, r.error_max, r.error_l2])
            .collect::<Vec<_>>()
    };
    let mut rows = table(&combined, 0.0);
    rows.extend(table(&spatial, 1.0));
    let header = ["spatial_only", "n_interior", "m_steps", "h", "dt", "error_max", "error_l2"];
    Ok(Outcome {
        results: json!({ "combined": combined, "spatial_only": spatial }),
        checks,
        tables: vec![(
            "convergence.csv".into(),
            Table { header: header.iter().map(|s| s.to_string()).collect(), rows },
        )],
    })
}

/// Weighted-estimate ratios of the linear control on the scenario grid and
/// on the grid refined twice in each direction.
pub fn ratio_drift(sc: &Scenario) -> Result<([f64; 3], [f64; 3])> {
    let ratios = |sc: &Scenario| -> Result<[f64; 3]> {
        let (_, _, ws) = weights_for(sc)?;
        let data = LinearData::from_scenario(sc);
        let r = solve_linear_control(&data, &ws, sc)?;
        let w = verify_weighted_estimates(&r.y, &r.p, &r.h, r.kappa0, r.kappa1, &ws, sc);
        Ok([w.ratio0, w.ratio1, w.ratio2])
    };
    let coarse = ratios(sc)?;
    let fine = ratios(&sc.resampled(2 * sc.grid.n_interior + 1, 2 * sc.grid.m_steps)?)?;
    Ok((coarse, fine))
}
