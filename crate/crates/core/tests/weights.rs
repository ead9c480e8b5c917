use approx::assert_relative_eq;
use proptest::prelude::*;

use hiercontrol::laws::DiffusionLaw;
use hiercontrol::quadrature::Interval;
use hiercontrol::scenario::{Scenario, ScenarioConfig};
use hiercontrol::weights::{build_psi, build_time_cap, build_weights, check_comparison_bound, weights_for};
use hiercontrol::Grid;

fn reference() -> Scenario {
    Scenario::from_config(ScenarioConfig::reference()).unwrap()
}

// Values computed independently with scipy's Hermite interpolant on a
// 2e6-point probe and mpmath at 50 digits.
const PSI_MAX: f64 = 0.18622404163476192;
const PSI_MIN: f64 = -0.24443405074927393;
const NU_BAR: f64 = -13.188568273045547;
const NU_MIN: f64 = -17.787816645543703;
const S_DEFAULT: f64 = 9.255766810525152e-06;
const ZETA0: f64 = 5.599248372498157;
/// `(n, log10 rho0, log10 rho1, log10 rho2, log10 rho_hat)` on the
/// reference grid (`dt = 0.005`).
const LOG_RHO: [(usize, [f64; 4]); 4] = [
    (50, [-7.654863470896324, -18.784082797018662, 0.39505385221532296, -13.219473133957495]),
    (75, [-1.1480489851880016, -13.27677820417674, 11.154785473644209, -7.212413594682371]),
    (90, [192.17537777918727, 177.49657845920322, 303.6899957212024, 184.83597811919526]),
    (98, [91942.3725314912, 91922.39784066656, 137934.2816177939, 91932.38518607887]),
];

#[test]
fn psi_matches_closed_form_pieces() {
    let sc = reference();
    let (psi, _, _) = weights_for(&sc).unwrap();
    assert_relative_eq!(psi.alpha_prime, 0.3625);
    assert_relative_eq!(psi.beta_prime, 0.7375);
    let [v, d1, _] = psi.eval(0.2);
    assert_relative_eq!(v, 2.0 / 3.0 * 0.2f64.powf(1.5), max_relative = 1e-14);
    assert_relative_eq!(v, 0.05963, epsilon = 1e-5);
    assert_relative_eq!(d1, 0.4472, epsilon = 1e-4);
    assert_relative_eq!(psi.psi_max, PSI_MAX, max_relative = 1e-7);
    assert_relative_eq!(psi.psi_min, PSI_MIN, max_relative = 1e-12);
    assert!(psi.junction_mismatch() <= 1e-8);
    assert_eq!(psi.eval(psi.beta_prime)[0], 0.0);
}

#[test]
fn psi_derivative_is_x_over_a_outside_the_blend() {
    let sc = reference();
    let (psi, _, _) = weights_for(&sc).unwrap();
    for (j, &x) in sc.grid.nodes().iter().enumerate().skip(1) {
        let ratio = x / sc.a_law.a(x);
        if x < psi.alpha_prime {
            assert!((psi.dpsi[j] - ratio).abs() <= 1e-10);
        } else if x >= psi.beta_prime {
            assert!((psi.dpsi[j] + ratio).abs() <= 1e-10);
        }
    }
}

#[test]
fn time_cap_oracles() {
    let t = 0.5;
    let grid = Grid::new(t, 49, 100).unwrap();
    let m0 = t.powi(8) / 16.0;
    let cap = build_time_cap(t, m0, &grid).unwrap();
    assert_eq!(cap.m[0], m0);
    assert_eq!(cap.value(0.75 * t), (0.75 * t).powi(4) * (0.25 * t).powi(4));
    for (&tt, &m) in grid.times().iter().zip(&cap.m) {
        if tt > 0.0 && tt <= t / 2.0 {
            assert!(m >= (tt * (t - tt)).powi(4));
        }
        if tt >= t / 2.0 {
            assert_eq!(m, (tt * (t - tt)).powi(4));
        }
    }
    assert!(cap.c1_jump() <= 1e-6);
    assert!(build_time_cap(t, 1e-4, &grid).is_err());
}

#[test]
fn reference_weights_match_frozen_values() {
    let (_, _, ws) = weights_for(&reference()).unwrap();
    assert_eq!(ws.lambda, 4.0);
    assert_relative_eq!(ws.nu_bar, NU_BAR, max_relative = 1e-7);
    assert_relative_eq!(ws.nu_min, NU_MIN, max_relative = 1e-12);
    assert_relative_eq!(ws.s, S_DEFAULT, max_relative = 1e-7);
    assert_relative_eq!(ws.zeta0, ZETA0, max_relative = 1e-7);
    for (n, expected) in LOG_RHO {
        let got = [ws.rho0[n].log10(), ws.rho1[n].log10(), ws.rho2[n].log10(), ws.rho_hat[n].log10()];
        for k in 0..4 {
            assert!(
                (got[k] - expected[k]).abs() <= 1e-6 * expected[k].abs().max(1.0),
                "n={n} k={k}: {} vs {}",
                got[k],
                expected[k]
            );
        }
    }
}

#[test]
fn weight_identities_hold_at_every_node() {
    let (_, _, ws) = weights_for(&reference()).unwrap();
    let report = ws.check_invariants();
    for c in &report.checks {
        assert!(c.passed, "{c:?}");
    }
    assert!(report.identity_max_rel_error <= 1e-13);
    assert!(report.zeta_ratio_max_rel_error <= 1e-12);
    for n in 0..ws.len() - 1 {
        assert!(3.0 * ws.a_star[n] < 2.0 * ws.a_hat[n] && ws.a_hat[n] < 0.0);
    }
}

#[test]
fn tau_equals_theta_on_the_second_half() {
    let (_, cap, ws) = weights_for(&reference()).unwrap();
    let t = cap.t_final;
    for (n, &tt) in ws.times.iter().enumerate() {
        if tt >= t / 2.0 && tt < t {
            assert_relative_eq!(ws.tau[n], 1.0 / (tt * (t - tt)).powi(4), max_relative = 1e-14);
        }
    }
    assert!(ws.tau.last().unwrap().is_infinite());
}

#[test]
fn comparison_constants_are_finite_and_scale_with_s() {
    let sc = reference();
    let (psi, cap, ws) = weights_for(&sc).unwrap();
    let rep = check_comparison_bound(&ws);
    assert!(rep.passed);
    assert!(rep.constant >= 1.0);
    assert!(rep.tail_ratio.is_finite());
    let doubled = build_weights(&psi, &cap, Some(2.0 * ws.s), Some(ws.lambda), &sc.grid).unwrap();
    assert_relative_eq!(doubled.big_m, 2.0 * ws.big_m, max_relative = 1e-15);
    assert!(check_comparison_bound(&doubled).passed);
}

#[test]
fn inadmissible_lambda_is_rejected() {
    let sc = reference();
    let (psi, cap, _) = weights_for(&sc).unwrap();
    assert!(build_weights(&psi, &cap, None, Some(0.01), &sc.grid).is_err());
    assert!(build_weights(&psi, &cap, Some(-1.0), None, &sc.grid).is_err());
}

#[test]
fn psi_rejects_points_outside_the_control_region() {
    let grid = Grid::new(0.5, 49, 10).unwrap();
    let law = DiffusionLaw::power(0.5);
    let o = Interval::new(0.3, 0.8);
    assert!(build_psi(&law, 0.2, 0.7, &o, &grid).is_err());
    assert!(build_psi(&law, 0.5, 0.4, &o, &grid).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn identities_hold_across_parameters(
        s_factor in 0.1f64..10.0,
        t_final in 0.2f64..2.0,
        gamma in 0.0f64..0.9,
    ) {
        let mut cfg = ScenarioConfig::reference();
        cfg.t_final = t_final;
        cfg.gamma = gamma;
        cfg.m_steps = 40;
        let sc = Scenario::from_config(cfg).unwrap();
        let (psi, cap, base) = weights_for(&sc).unwrap();
        let ws = build_weights(&psi, &cap, Some(base.s * s_factor), None, &sc.grid).unwrap();
        let rep = ws.check_invariants();
        prop_assert!(rep.identity_max_rel_error <= 1e-13);
        prop_assert!(rep.zeta_ratio_max_rel_error <= 1e-12);
        for n in 0..ws.len() - 1 {
            prop_assert!(3.0 * ws.a_star[n] < 2.0 * ws.a_hat[n]);
            prop_assert!(ws.a_hat[n] < 0.0);
        }
    }
}
