//! One line per acceptance criterion. Exits nonzero when a criterion fails,
//! except for failures listed as known, which are printed but tolerated.

use std::time::Instant;

use hiercontrol::control::{solve_linear_control, LinearData};
use hiercontrol::exec::Exec;
use hiercontrol::grid::SpaceTimeField;
use hiercontrol::harness::{execute, ratio_drift, resolve_scenario, Cli, Command};
use hiercontrol::hierarchy::{controllability_radius, liusternik_solve};
use hiercontrol::laws::NonlocalLaw;
use hiercontrol::nash::{
    directional_gradient, estimate_convexity_threshold, functional, hessian_quadratic_form, solve_nash, test_directions,
};
use hiercontrol::operator::{assemble_stiffness, eigen_decompose};
use hiercontrol::quadrature::{a_energy, inner};
use hiercontrol::scenario::{InitialDatum, Scenario, ScenarioConfig, TargetSpec};
use hiercontrol::solvers::{
    coupled_energy_check, solve_forward_nonlocal, solve_galerkin, solve_optimality_system, ControlTriple,
};
use hiercontrol::study::{convergence_study, StudyMode};
use hiercontrol::weights::weights_for;

use clap::Parser;

type Outcome = Result<String, String>;

/// Label, check, and whether a failure is already known.
type Criterion = (&'static str, fn() -> Outcome, bool);

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reference() -> Scenario {
    Scenario::from_config(ScenarioConfig::reference()).unwrap()
}

fn with_targets(amp: f64) -> Scenario {
    reference().with(|c| c.targets = TargetSpec::Separable { amplitude: [amp, -amp], mode: 1, t_off: 0.5 }).unwrap()
}

fn rel_q(a: &SpaceTimeField, b: &SpaceTimeField, sc: &Scenario) -> f64 {
    let mut d = a.clone();
    d.axpy(-1.0, b);
    d.norm_q(&sc.grid) / b.norm_q(&sc.grid)
}

fn criterion_1() -> Outcome {
    let (_, _, ws) = weights_for(&reference()).map_err(|e| e.to_string())?;
    let rep = ws.check_invariants();
    let ordered = (0..ws.len() - 1).all(|n| 3.0 * ws.a_star[n] < 2.0 * ws.a_hat[n] && ws.a_hat[n] < 0.0);
    verdict(
        rep.identity_max_rel_error <= 1e-13 && rep.zeta_ratio_max_rel_error <= 1e-12 && ordered,
        format!(
            "identity err {:.1e}, zeta ratio err {:.1e}, ordering {}",
            rep.identity_max_rel_error, rep.zeta_ratio_max_rel_error, ordered
        ),
    )
}

fn criterion_2() -> Outcome {
    let cfg = ScenarioConfig::reference();
    let run = |mode| convergence_study(0.5, cfg.t_final, cfg.n_interior, cfg.m_steps, 3, mode, Exec::default());
    let combined = run(StudyMode::Combined).map_err(|e| e.to_string())?;
    let spatial = run(StudyMode::SpatialOnly { m_steps: cfg.m_steps }).map_err(|e| e.to_string())?;
    verdict(
        combined.monotone && spatial.monotone && combined.min_order_l2 >= 1.0 && spatial.min_order_l2 >= 1.5,
        format!("orders combined {:.2}, spatial {:.2}", combined.min_order_l2, spatial.min_order_l2),
    )
}

fn galerkin_gap(sc: &Scenario) -> Result<f64, String> {
    let op = assemble_stiffness(&sc.a_law, &sc.grid, 1.0);
    let basis = eigen_decompose(&op, sc.grid.n_interior).map_err(|e| e.to_string())?;
    let h = SpaceTimeField::from_fn(&sc.grid, |t, x| 0.5 * (std::f64::consts::PI * x).sin() * (1.0 + t));
    let controls = ControlTriple::leader_only(h);
    let fv = solve_forward_nonlocal(&sc.y0, &controls, sc).map_err(|e| e.to_string())?;
    let gk = solve_galerkin(&sc.y0, &controls, sc, &basis).map_err(|e| e.to_string())?;
    Ok(rel_q(&gk.y, &fv.y, sc))
}

fn criterion_3() -> Outcome {
    let atan = reference();
    let constant = atan.with(|c| c.ell = NonlocalLaw::Constant { c0: 1.0 }).unwrap();
    let (gc, ga) = (galerkin_gap(&constant)?, galerkin_gap(&atan)?);
    verdict(gc <= 1e-8 && ga <= 1e-3, format!("N = {}: constant {gc:.1e}, atan {ga:.1e}", atan.grid.n_interior + 1))
}

fn criterion_4() -> Outcome {
    let sc = reference();
    let sol = solve_optimality_system(&SpaceTimeField::zeros(&sc.grid), &sc).map_err(|e| e.to_string())?;
    let c = coupled_energy_check(&sol, &sc);
    verdict(c.passed, format!("energy/data {:.3} <= margin {:.3}", c.ratio, c.margin))
}

fn criterion_5() -> Outcome {
    let sc = with_targets(0.05);
    let cert = solve_nash(&SpaceTimeField::zeros(&sc.grid), &sc).map_err(|e| e.to_string())?;
    let mut worst_gap: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    let eps = 1e-4;
    for i in 0..2 {
        let dirs = test_directions(i, 5, sc.config.seed, &sc);
        for d in &dirs {
            let g = directional_gradient(i, d, &cert.controls, &sc).map_err(|e| e.to_string())?;
            worst_gap = worst_gap.max(g.abs() / (d.norm_q_left(&sc.grid) * cert.scale[i]));
        }
        // Away from the equilibrium the gradient is nonzero.
        let mut base = cert.controls.clone();
        base.v[i].axpy(0.1, &dirs[0]);
        for d in &dirs[1..4] {
            let g = directional_gradient(i, d, &base, &sc).map_err(|e| e.to_string())?;
            let shifted = |e: f64| {
                let mut c = base.clone();
                c.v[i].axpy(e, d);
                functional(i, &c, &sc)
            };
            let fd =
                (shifted(eps).map_err(|e| e.to_string())? - shifted(-eps).map_err(|e| e.to_string())?) / (2.0 * eps);
            worst_fd = worst_fd.max((g - fd).abs() / fd.abs());
        }
    }
    verdict(
        worst_gap <= 1e-6 && worst_fd <= 1e-4,
        format!("gap/scale {worst_gap:.1e} on 6 directions, FD rel err {worst_fd:.1e}"),
    )
}

fn threshold_scenario(amp: f64) -> Scenario {
    with_targets(amp)
        .with(|c| {
            c.n_interior = 29;
            c.m_steps = 40;
            c.ell = NonlocalLaw::Atan { c0: 1.0, c1: -0.5 };
            c.y0 = InitialDatum::Sine { amplitude: amp, mode: 1 };
        })
        .unwrap()
}

fn criterion_6() -> Outcome {
    let sc = with_targets(0.05);
    let mut base = ControlTriple::leader_only(SpaceTimeField::zeros(&sc.grid));
    base.v[0] = SpaceTimeField::from_fn(&sc.grid, |t, x| 0.05 * (x + t)).masked(&sc.masks.o1);
    let bumped = sc.with(|c| c.mu = [c.mu[0] + 0.75, c.mu[1] + 0.75]).unwrap();
    let eps = 1e-4;
    let (mut worst_fd, mut worst_mu): (f64, f64) = (0.0, 0.0);
    let err = |e: hiercontrol::Error| e.to_string();
    for i in 0..2 {
        for d in test_directions(i, 2, 5, &sc) {
            let q = hessian_quadratic_form(i, &d, &base, &sc).map_err(err)?;
            let grad_at = |e: f64| {
                let mut c = base.clone();
                c.v[i].axpy(e, &d);
                directional_gradient(i, &d, &c, &sc)
            };
            let fd = (grad_at(eps).map_err(err)? - grad_at(-eps).map_err(err)?) / (2.0 * eps);
            worst_fd = worst_fd.max((q - fd).abs() / fd.abs());
            let q1 = hessian_quadratic_form(i, &d, &base, &bumped).map_err(err)?;
            let n2 = d.masked(sc.masks.follower(i)).dot_q_left(&d, &sc.grid);
            worst_mu = worst_mu.max((q1 - q - 0.75 * n2).abs() / q1.abs().max(1.0));
        }
    }
    let mut thresholds = Vec::new();
    for amp in [4.0, 1.0, 0.1] {
        let t = estimate_convexity_threshold(&threshold_scenario(amp), 3).map_err(err)?;
        if t.not_found {
            return Err(format!("no threshold found at data scale {amp}"));
        }
        thresholds.push(t.mu);
    }
    let decreasing = thresholds.windows(2).all(|w| w[1] < w[0]);
    verdict(
        worst_fd <= 1e-3 && worst_mu <= 1e-12 && decreasing,
        format!(
            "Hessian FD rel err {worst_fd:.1e}, mu shift err {worst_mu:.1e}, thresholds {:.3e} > {:.3e} > {:.3e} (l = 1 - 0.5 atan)",
            thresholds[0], thresholds[1], thresholds[2]
        ),
    )
}

fn criterion_7() -> Outcome {
    let sc = reference();
    let (_, _, ws) = weights_for(&sc).map_err(|e| e.to_string())?;
    let r = solve_linear_control(&LinearData::from_scenario(&sc), &ws, &sc).map_err(|e| e.to_string())?;
    let y0 = inner(&sc.y0, &sc.y0, sc.grid.h).sqrt();
    verdict(
        r.final_norm <= 1e-6 * y0 && r.weighted.all_finite(),
        format!("||y(T)||/||y0|| = {:.1e}, weighted ratios finite {}", r.final_norm / y0, r.weighted.all_finite()),
    )
}

fn criterion_7_drift() -> Outcome {
    let (coarse, fine) = ratio_drift(&reference()).map_err(|e| e.to_string())?;
    let drift: Vec<f64> = (0..3).map(|k| (fine[k] / coarse[k]).max(coarse[k] / fine[k])).collect();
    verdict(
        drift.iter().all(|&d| d <= 2.0),
        format!("ratio drift under refinement {:.2}x, {:.2}x, {:.2}x (limit 2x)", drift[0], drift[1], drift[2]),
    )
}

fn criterion_8() -> Outcome {
    let sc = reference();
    let (_, _, ws) = weights_for(&sc).map_err(|e| e.to_string())?;
    let r = solve_linear_control(&LinearData::from_scenario(&sc), &ws, &sc).map_err(|e| e.to_string())?;
    verdict(
        r.transposition_gap <= r.transposition_bound,
        format!("gap {:.2e} <= bound {:.2e}", r.transposition_gap, r.transposition_bound),
    )
}

fn criterion_9() -> Outcome {
    let base = reference();
    let g = &base.grid;
    let delta0 = (inner(&base.y0, &base.y0, g.h) + a_energy(&base.y0, &base.y0, &base.a_law, g)).sqrt();
    let sc = base.with(|c| c.y0 = c.y0.scaled(1e-3 / delta0)).unwrap();
    let cfg = sc.config.solver;
    let r = liusternik_solve(&sc, cfg.outer_max_iter, cfg.outer_tol).map_err(|e| e.to_string())?;
    let constant = sc.with(|c| c.ell = NonlocalLaw::Constant { c0: 1.0 }).unwrap();
    let rc = liusternik_solve(&constant, cfg.outer_max_iter, cfg.outer_tol).map_err(|e| e.to_string())?;
    verdict(
        r.max_contraction() < 0.9 && r.final_norm <= 1e-6 * r.delta && rc.outer_iterations == 1,
        format!(
            "delta {:.1e}: {} iterations, contraction {:.1e}, ||y(T)|| {:.1e}; constant law {} iteration",
            r.delta,
            r.outer_iterations,
            r.max_contraction(),
            r.final_norm,
            rc.outer_iterations
        ),
    )
}

fn criterion_10() -> Outcome {
    let sc = reference();
    let rep = controllability_radius(&sc, 1.0, 8, 2, 4, sc.config.solver.outer_tol).map_err(|e| e.to_string())?;
    let reported = rep.samples.iter().filter(|s| !s.converged).all(|s| s.failure.is_some());
    verdict(
        rep.delta_star > 0.0 && rep.delta_fail.is_some() && reported,
        format!(
            "delta* {:.3e}, first failure at {:.3e} (4 outer iterations allowed)",
            rep.delta_star,
            rep.delta_fail.unwrap_or(f64::NAN)
        ),
    )
}

fn criterion_11() -> Outcome {
    let cli = Cli::try_parse_from(["hiercontrol", "nash"]).unwrap();
    let sc = resolve_scenario(&cli.options).map_err(|e| e.to_string())?;
    let mut same = true;
    for cmd in [Command::Simulate, Command::Nash, Command::ControlLinear, Command::Certify] {
        let a = execute(cmd, &sc, &cli.options).report.reproducible_json();
        let b = execute(cmd, &sc, &cli.options).report.reproducible_json();
        same &= a == b;
    }
    verdict(same, "simulate, nash, control-linear, certify reports identical across runs".into())
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("1", criterion_1, false),
        ("2", criterion_2, false),
        ("3", criterion_3, false),
        ("4", criterion_4, false),
        ("5", criterion_5, false),
        ("6", criterion_6, false),
        ("7", criterion_7, false),
        ("7 (refinement drift)", criterion_7_drift, true),
        ("8", criterion_8, false),
        ("9", criterion_9, false),
        ("10", criterion_10, false),
        ("11", criterion_11, false),
    ];
    let mut unexpected = 0;
    for (name, check, known) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS  {detail}  [{secs:.1}s]"),
            Err(detail) if known => println!("criterion {name}: FAIL (known)  {detail}  [{secs:.1}s]"),
            Err(detail) => {
                unexpected += 1;
                println!("criterion {name}: FAIL  {detail}  [{secs:.1}s]");
            }
        }
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}
