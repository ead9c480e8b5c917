#![allow(clippy::needless_range_loop)]

use approx::assert_relative_eq;
use proptest::prelude::*;

use hiercontrol::extreal::ExtReal;
use hiercontrol::grid::Grid;
use hiercontrol::laws::{DiffusionLaw, NonlocalLaw};
use hiercontrol::operator::{assemble_stiffness, eigen_decompose, Tridiagonal};
use hiercontrol::quadrature::{a_energy, inner, l1_integral, weighted_norms, Interval};
use hiercontrol::scenario::{load_scenario, save_scenario, Scenario, ScenarioConfig};
use hiercontrol::Error;

fn grid(n: usize) -> Grid {
    Grid::new(0.5, n, 10).unwrap()
}

#[test]
fn grid_endpoints_are_exact() {
    let g = Grid::new(0.5, 49, 100).unwrap();
    assert_eq!(g.nodes()[0], 0.0);
    assert_eq!(*g.nodes().last().unwrap(), 1.0);
    assert_eq!(g.times()[0], 0.0);
    assert_eq!(*g.times().last().unwrap(), 0.5);
    assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
    assert!(Grid::new(0.5, 2, 10).is_err());
    assert!(Grid::new(0.5, 5, 1).is_err());
}

#[test]
fn reference_scenario_is_accepted() {
    let sc = Scenario::from_config(ScenarioConfig::reference()).unwrap();
    assert_eq!(sc.y0[0], 0.0);
    assert_eq!(*sc.y0.last().unwrap(), 0.0);
    assert!(sc.targets_vanish());
}

fn rejection(edit: impl FnOnce(&mut ScenarioConfig)) -> Vec<String> {
    let mut cfg = ScenarioConfig::reference();
    edit(&mut cfg);
    match Scenario::from_config(cfg) {
        Err(Error::InvalidScenario(rules)) => rules,
        other => panic!("expected rejection, got {other:?}"),
    }
}

#[test]
fn disjoint_observation_region_is_rejected() {
    let rules = rejection(|c| c.regions.o = Interval::new(0.1, 0.2));
    assert!(rules.iter().any(|r| r.contains("O_d ∩ O nonempty")), "{rules:?}");
}

#[test]
fn strong_degeneracy_is_rejected() {
    let rules = rejection(|c| c.gamma = 1.2);
    assert!(rules.iter().any(|r| r.contains("K in [0,1)")), "{rules:?}");
}

#[test]
fn nonpositive_cost_weight_is_rejected() {
    let rules = rejection(|c| c.mu = [0.0, 1.0]);
    assert!(!rules.is_empty());
}

#[test]
fn scenario_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.json");
    let sc = Scenario::from_config(ScenarioConfig::reference()).unwrap();
    save_scenario(&sc, &path).unwrap();
    let back = load_scenario(&path).unwrap();
    assert_eq!(back, sc);
}

#[test]
fn unknown_fields_fail_to_parse() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut v = serde_json::to_value(ScenarioConfig::reference()).unwrap();
    v["unexpected"] = serde_json::json!(1);
    std::fs::write(&path, v.to_string()).unwrap();
    assert!(matches!(load_scenario(&path), Err(Error::Parse(_))));
}

#[test]
fn l1_integral_oracles() {
    let g = grid(199);
    let ones = vec![1.0; g.n_nodes()];
    assert_eq!(l1_integral(&ones, &g).unwrap(), 1.0);
    let zeros = vec![0.0; g.n_nodes()];
    assert_eq!(l1_integral(&zeros, &g).unwrap(), 0.0);
    let s: Vec<f64> = g.nodes().iter().map(|x| (std::f64::consts::PI * x).sin()).collect();
    assert!((l1_integral(&s, &g).unwrap() - 2.0 / std::f64::consts::PI).abs() < 1e-4);
    assert!(l1_integral(&s[1..], &g).is_err());
}

#[test]
fn weighted_seminorm_oracle() {
    // int x^{1/2} (1 - 2x)^2 dx = 2/3 - 8/5 + 8/7 = 22/105
    let g = grid(199);
    let law = DiffusionLaw::power(0.5);
    let u: Vec<f64> = g.nodes().iter().map(|x| x * (1.0 - x)).collect();
    let n = weighted_norms(&u, &law, &g).unwrap();
    let exact: f64 = 22.0 / 105.0;
    assert!((n.h1a_seminorm.powi(2) - exact).abs() < 1e-3, "{} vs {exact}", n.h1a_seminorm.powi(2));
    let z = weighted_norms(&vec![0.0; g.n_nodes()], &law, &g).unwrap();
    assert_eq!((z.l2, z.h1a_seminorm, z.h1a_norm), (0.0, 0.0, 0.0));
    let scaled: Vec<f64> = u.iter().map(|v| -3.0 * v).collect();
    let m = weighted_norms(&scaled, &law, &g).unwrap();
    assert_relative_eq!(m.h1a_norm, 3.0 * n.h1a_norm, max_relative = 1e-14);
    assert_relative_eq!(m.l2, 3.0 * n.l2, max_relative = 1e-14);
}

#[test]
fn power_law_degeneracy_constant_equals_gamma() {
    for gamma in [0.0, 0.25, 0.5, 0.9] {
        let law = DiffusionLaw::power(gamma);
        let g = grid(49);
        assert_relative_eq!(law.k_on_nodes(g.nodes()), gamma, epsilon = 1e-14);
        assert_eq!(law.a(0.0), 0.0);
    }
}

#[test]
fn nonlocal_derivatives_match_finite_differences() {
    let laws = [
        NonlocalLaw::Atan { c0: 1.0, c1: 0.5 },
        NonlocalLaw::Logistic { c0: 0.6, c1: 0.8, k: 3.0 },
        NonlocalLaw::Constant { c0: 2.0 },
    ];
    for law in laws {
        for s in [-2.0, -0.3, 0.0, 0.7, 1.5] {
            let e = 1e-5;
            let d1 = (law.value(s + e) - law.value(s - e)) / (2.0 * e);
            let d2 = (law.d1(s + e) - law.d1(s - e)) / (2.0 * e);
            assert!((d1 - law.d1(s)).abs() <= 1e-6 * law.d1(s).abs().max(1e-3), "{law:?} {s}");
            assert!((d2 - law.d2(s)).abs() <= 1e-6 * law.d2(s).abs().max(1e-3), "{law:?} {s}");
            assert!(law.d1(s).abs() <= law.lip_bound() + 1e-15);
            assert!(law.d2(s).abs() <= law.lip_bound() + 1e-15);
        }
    }
}

#[test]
fn stiffness_hand_values() {
    let g = Grid::new(0.5, 3, 4).unwrap();
    let op = assemble_stiffness(&DiffusionLaw::power(0.5), &g, 1.0);
    // (a(0.125) + a(0.375)) / h^2
    assert_relative_eq!(op.diag[0], (0.125f64.sqrt() + 0.375f64.sqrt()) * 16.0, max_relative = 1e-14);
    assert_relative_eq!(op.diag[0], 15.455, epsilon = 1e-3);
    let flat = assemble_stiffness(&DiffusionLaw::power(0.0), &g, 1.0);
    for j in 0..3 {
        assert_relative_eq!(flat.diag[j], 32.0);
    }
    assert_relative_eq!(flat.sup[0], -16.0);
    assert_relative_eq!(flat.sub[2], -16.0);
    assert_eq!(op.apply(&[0.0; 3]), vec![0.0; 3]);
    assert!(op.is_symmetric());
    assert!(op.is_diagonally_dominant());
}

#[test]
fn constant_coefficient_eigenvalues_are_closed_form() {
    let g = grid(31);
    let op = assemble_stiffness(&DiffusionLaw::power(0.0), &g, 1.0);
    let basis = eigen_decompose(&op, 6).unwrap();
    for (i, &l) in basis.lambdas.iter().enumerate() {
        let k = (i + 1) as f64;
        let exact = 4.0 / (g.h * g.h) * (k * std::f64::consts::PI * g.h / 2.0).sin().powi(2);
        assert_relative_eq!(l, exact, max_relative = 1e-10);
    }
    let g3 = Grid::new(0.5, 3, 4).unwrap();
    let b = eigen_decompose(&assemble_stiffness(&DiffusionLaw::power(0.0), &g3, 1.0), 1).unwrap();
    assert_relative_eq!(b.lambdas[0], 16.0 * 4.0 * (std::f64::consts::PI / 8.0).sin().powi(2), max_relative = 1e-12);
}

#[test]
fn degenerate_eigenpairs_are_orthonormal_with_small_residual() {
    let g = grid(49);
    let op = assemble_stiffness(&DiffusionLaw::power(0.5), &g, 1.0);
    let b = eigen_decompose(&op, 8).unwrap();
    assert!(b.lambdas[0] > 0.0);
    assert!(b.lambdas.windows(2).all(|w| w[1] > w[0]));
    for i in 0..b.k {
        let w = &b.modes[i];
        let aw = op.apply(w);
        let res: f64 = aw.iter().zip(w).map(|(a, v)| (a - b.lambdas[i] * v).powi(2)).sum::<f64>().sqrt();
        let nrm: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(res <= 1e-8 * b.lambdas[i] * nrm);
        let rq: f64 = aw.iter().zip(w).map(|(a, v)| a * v).sum::<f64>() / (nrm * nrm);
        assert_relative_eq!(rq, b.lambdas[i], max_relative = 1e-10);
        for j in 0..b.k {
            let d: f64 = g.h * w.iter().zip(&b.modes[j]).map(|(a, c)| a * c).sum::<f64>();
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((d - expected).abs() < 1e-10, "({i},{j}) {d}");
        }
    }
}

#[test]
fn tridiagonal_matches_dense_elimination() {
    // Dense oracle: Gaussian elimination with partial pivoting on the same
    // 5x5 SPD matrix.
    let t = Tridiagonal {
        lower: vec![0.0, -1.0, -0.5, -2.0, -0.3],
        diag: vec![4.0, 3.0, 5.0, 6.0, 2.0],
        upper: vec![-1.0, -0.5, -2.0, -0.3, 0.0],
    };
    let rhs = [1.0, -2.0, 0.5, 3.0, -1.0];
    let x = t.solve(&rhs).unwrap();
    let mut a = [[0.0f64; 6]; 5];
    for i in 0..5 {
        a[i][i] = t.diag[i];
        if i > 0 {
            a[i][i - 1] = t.lower[i];
        }
        if i < 4 {
            a[i][i + 1] = t.upper[i];
        }
        a[i][5] = rhs[i];
    }
    for c in 0..5 {
        let p = (c..5).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap()).unwrap();
        a.swap(c, p);
        for r in c + 1..5 {
            let f = a[r][c] / a[c][c];
            for k in c..6 {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    let mut y = [0.0; 5];
    for r in (0..5).rev() {
        y[r] = (a[r][5] - (r + 1..5).map(|k| a[r][k] * y[k]).sum::<f64>()) / a[r][r];
    }
    for i in 0..5 {
        assert!((x[i] - y[i]).abs() <= 1e-12);
    }
    assert_eq!(t.solve(&[0.0; 5]).unwrap(), vec![0.0; 5]);
    assert_eq!(Tridiagonal::identity(3).solve(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
}

#[test]
fn rank_one_solve_matches_direct_product() {
    let t = Tridiagonal { lower: vec![0.0, -1.0, -1.0, -1.0], diag: vec![3.0; 4], upper: vec![-1.0, -1.0, -1.0, 0.0] };
    let u = [0.2, -0.1, 0.4, 0.3];
    let w = [1.0, 0.5, -0.2, 0.1];
    let x = t.solve_rank_one(&u, &w, &[1.0, 2.0, 3.0, 4.0]).unwrap();
    let tx = t.mul(&x);
    let wx: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
    for i in 0..4 {
        assert_relative_eq!(tx[i] + u[i] * wx, (i + 1) as f64, max_relative = 1e-13);
    }
}

#[test]
fn extreal_reaches_beyond_f64() {
    let big = ExtReal::exp(2000.0);
    let small = ExtReal::exp(-2000.0);
    assert!(big.is_finite());
    assert_relative_eq!((big * small).to_f64(), 1.0, max_relative = 1e-12);
    assert_relative_eq!(big.log10(), 2000.0 / std::f64::consts::LN_10, max_relative = 1e-14);
    assert_eq!(big.to_f64(), f64::INFINITY);
    assert_eq!(small.to_f64(), 0.0);
    assert!(ExtReal::ZERO.is_zero());
}

fn dirichlet(values: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0];
    v.extend_from_slice(values);
    v.push(0.0);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn summation_by_parts(
        u in prop::collection::vec(-1.0f64..1.0, 15),
        v in prop::collection::vec(-1.0f64..1.0, 15),
        gamma in 0.0f64..0.95,
    ) {
        let g = grid(15);
        let law = DiffusionLaw::power(gamma);
        let op = assemble_stiffness(&law, &g, 1.0);
        let au = op.apply(&u);
        let lhs: f64 = g.h * au.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        let rhs = a_energy(&dirichlet(&u), &dirichlet(&v), &law, &g);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs().max(rhs.abs()).max(1.0)));
        let e = a_energy(&dirichlet(&u), &dirichlet(&u), &law, &g);
        prop_assert!(e >= 0.0);
    }

    #[test]
    fn energy_decreases_in_gamma_away_from_right_end(
        vals in prop::collection::vec(-1.0f64..1.0, 10),
        g1 in 0.0f64..0.45,
        dg in 0.05f64..0.5,
    ) {
        // Support on the first ten interior nodes of a 19-node grid.
        let g = grid(19);
        let mut u = vec![0.0; g.n_nodes()];
        u[1..11].copy_from_slice(&vals);
        let lo = a_energy(&u, &u, &DiffusionLaw::power(g1), &g);
        let hi = a_energy(&u, &u, &DiffusionLaw::power(g1 + dg), &g);
        prop_assert!(hi <= lo + 1e-14);
    }

    #[test]
    fn l1_integral_is_linear(
        u in prop::collection::vec(-5.0f64..5.0, 22),
        v in prop::collection::vec(-5.0f64..5.0, 22),
    ) {
        let g = grid(20);
        let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        let i = |x: &[f64]| l1_integral(x, &g).unwrap();
        let nu = inner(&u, &u, g.h).sqrt();
        let nv = inner(&v, &v, g.h).sqrt();
        prop_assert!((i(&w) - i(&u) - i(&v)).abs() <= 1e-14 * (nu + nv).max(1.0));
    }

    #[test]
    fn tridiagonal_solve_inverts_multiplication(
        x in prop::collection::vec(-10.0f64..10.0, 8),
        off in prop::collection::vec(-1.0f64..1.0, 8),
    ) {
        let mut lower = off.clone();
        lower[0] = 0.0;
        let mut upper: Vec<f64> = off.iter().skip(1).copied().collect();
        upper.push(0.0);
        let diag = vec![3.0; 8];
        let t = Tridiagonal { lower, diag, upper };
        let back = t.solve(&t.mul(&x)).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() <= 1e-11 * b.abs().max(1.0));
        }
    }

    #[test]
    fn extreal_products_match_log_sums(a in -700.0f64..700.0, b in -700.0f64..700.0) {
        let p = ExtReal::exp(a) * ExtReal::exp(b);
        prop_assert!((p.ln() - (a + b)).abs() <= 1e-12 * (a.abs() + b.abs()).max(1.0));
        let q = ExtReal::exp(a) / ExtReal::exp(b);
        prop_assert!((q.ln() - (a - b)).abs() <= 1e-12 * (a.abs() + b.abs()).max(1.0));
    }
}
