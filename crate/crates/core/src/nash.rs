//! Follower game: the functionals `J_1`, `J_2`, the Nash quasi-equilibrium
//! for a fixed leader control, its first- and second-order certificates and
//! an empirical convexity threshold.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::SpaceTimeField;
use crate::scenario::Scenario;
use crate::solvers::{
    follower_adjoint, solve_forward_nonlocal, solve_optimality_system, solve_second_order_pair,
    solve_sensitivity_omega, ControlTriple, CoupledSolution, NonlocalSolve,
};

/// Values of both follower functionals, split into their two terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalReport {
    pub j: [f64; 2],
    /// `int_{O_d x (0,T)} |y - y_{i,d}|^2`.
    pub tracking: [f64; 2],
    /// `int_{O_i x (0,T)} |v^i|^2`.
    pub cost: [f64; 2],
    /// `L^2` norm of the gradient `1_{O_i}(p^i + mu_i v^i)`.
    pub gradient_norms: [f64; 2],
}

fn tracking_term(i: usize, y: &SpaceTimeField, scenario: &Scenario) -> f64 {
    let d = y_minus_target(i, y, scenario);
    d.masked(&scenario.masks.od).dot_q(&d, &scenario.grid)
}

fn y_minus_target(i: usize, y: &SpaceTimeField, scenario: &Scenario) -> SpaceTimeField {
    let mut d = y.clone();
    d.axpy(-1.0, &scenario.targets[i]);
    d
}

fn cost_term(i: usize, v: &SpaceTimeField, scenario: &Scenario) -> f64 {
    v.masked(scenario.masks.follower(i)).dot_q_left(v, &scenario.grid)
}

/// `J_i = alpha_i/2 * tracking_i + mu_i/2 * cost_i` for the given controls.
pub fn eval_functionals(controls: &ControlTriple, scenario: &Scenario) -> Result<FunctionalReport> {
    let state = solve_forward_nonlocal(&scenario.y0, controls, scenario)?;
    functionals_at(controls, &state, scenario)
}

fn functionals_at(controls: &ControlTriple, state: &NonlocalSolve, scenario: &Scenario) -> Result<FunctionalReport> {
    let mut rep = FunctionalReport { j: [0.0; 2], tracking: [0.0; 2], cost: [0.0; 2], gradient_norms: [0.0; 2] };
    for i in 0..2 {
        rep.tracking[i] = tracking_term(i, &state.y, scenario);
        rep.cost[i] = cost_term(i, &controls.v[i], scenario);
        rep.j[i] = 0.5 * scenario.alpha[i] * rep.tracking[i] + 0.5 * scenario.mu[i] * rep.cost[i];
        let p = follower_adjoint(i, state, scenario)?;
        let mut g = p;
        g.axpy(scenario.mu[i], &controls.v[i]);
        rep.gradient_norms[i] = g.masked(scenario.masks.follower(i)).norm_q_left(&scenario.grid);
    }
    Ok(rep)
}

/// Value of `J_i` alone.
pub fn functional(i: usize, controls: &ControlTriple, scenario: &Scenario) -> Result<f64> {
    let state = solve_forward_nonlocal(&scenario.y0, controls, scenario)?;
    Ok(0.5 * scenario.alpha[i] * tracking_term(i, &state.y, scenario)
        + 0.5 * scenario.mu[i] * cost_term(i, &controls.v[i], scenario))
}

/// Quasi-equilibrium for a leader control with its first- and second-order
/// certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCertificate {
    pub solution: CoupledSolution,
    pub controls: ControlTriple,
    /// Largest `|J_i'(v) . (v_hat, 0)|` over the unit test directions.
    pub duality_gap: [f64; 2],
    /// Gradient magnitude scale `alpha_i ||1_{O_d}(y - y_{i,d})|| + mu_i ||v^i||`.
    pub scale: [f64; 2],
    /// Smallest sampled `J_i''(v)(v_bar, v_bar) / ||v_bar||^2`.
    pub hessian_rayleigh: [f64; 2],
    pub functionals: FunctionalReport,
}

impl EquilibriumCertificate {
    pub fn v(&self, i: usize) -> &SpaceTimeField {
        &self.controls.v[i]
    }

    pub fn p(&self, i: usize) -> &SpaceTimeField {
        &self.solution.p[i]
    }

    /// Gaps within `tol * scale`.
    pub fn gaps_within(&self, tol: f64) -> bool {
        (0..2).all(|i| self.duality_gap[i] <= tol * self.scale[i].max(f64::MIN_POSITIVE) || self.duality_gap[i] == 0.0)
    }
}

/// Unit-norm test directions for follower `i`: `count` Gaussian fields on
/// `O_i` drawn from `seed`, followed by the constant direction.
pub fn test_directions(i: usize, count: usize, seed: u64, scenario: &Scenario) -> Vec<SpaceTimeField> {
    let grid = &scenario.grid;
    let mask = scenario.masks.follower(i);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64 * 0x9E37_79B9));
    let mut out = Vec::with_capacity(count + 1);
    for _ in 0..count {
        let mut f = SpaceTimeField::zeros(grid);
        for n in 0..grid.m_steps {
            for (j, v) in f.row_mut(n).iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = if mask[j] > 0.0 { z } else { 0.0 };
            }
        }
        out.push(f);
    }
    let mut c = SpaceTimeField::zeros(grid);
    for n in 0..grid.m_steps {
        c.set_row(n, mask);
    }
    out.push(c);
    out.into_iter()
        .map(|f| {
            let nrm = f.norm_q_left(grid);
            if nrm > 0.0 {
                f.scaled(1.0 / nrm)
            } else {
                f
            }
        })
        .collect()
}

/// `J_i'(h, v) . (v_hat, 0)` through the linearized state:
/// `alpha_i int_{O_d} (y - y_{i,d}) omega + mu_i int_{O_i} v^i v_hat`.
pub fn directional_gradient(
    i: usize,
    v_hat: &SpaceTimeField,
    controls: &ControlTriple,
    scenario: &Scenario,
) -> Result<f64> {
    let state = solve_forward_nonlocal(&scenario.y0, controls, scenario)?;
    directional_gradient_at(i, v_hat, controls, &state, scenario)
}

fn directional_gradient_at(
    i: usize,
    v_hat: &SpaceTimeField,
    controls: &ControlTriple,
    state: &NonlocalSolve,
    scenario: &Scenario,
) -> Result<f64> {
    let grid = &scenario.grid;
    let omega = solve_sensitivity_omega(i, v_hat, state, scenario)?;
    let d = y_minus_target(i, &state.y, scenario).masked(&scenario.masks.od);
    let track = scenario.alpha[i] * d.dot_q(&omega, grid);
    let cost = scenario.mu[i] * controls.v[i].masked(scenario.masks.follower(i)).dot_q_left(v_hat, grid);
    Ok(track + cost)
}

/// `J_i''(h, v)(v_bar, v_bar) = int_{O_i} eta v_bar + mu_i int_{O_i} |v_bar|^2`.
pub fn hessian_quadratic_form(
    i: usize,
    v_bar: &SpaceTimeField,
    controls: &ControlTriple,
    scenario: &Scenario,
) -> Result<f64> {
    let state = solve_forward_nonlocal(&scenario.y0, controls, scenario)?;
    hessian_at(i, v_bar, &state, scenario)
}

fn hessian_at(i: usize, v_bar: &SpaceTimeField, state: &NonlocalSolve, scenario: &Scenario) -> Result<f64> {
    let grid = &scenario.grid;
    let phi = follower_adjoint(i, state, scenario)?;
    let (eta, _theta) = solve_second_order_pair(i, v_bar, state, &phi, scenario)?;
    let vb = v_bar.masked(scenario.masks.follower(i));
    Ok(vb.dot_q_left(&eta, grid) + scenario.mu[i] * vb.dot_q_left(v_bar, grid))
}

/// Number of random directions in each certificate (the constant direction
/// is added on top).
pub const RANDOM_DIRECTIONS: usize = 5;

/// Quasi-equilibrium for the leader control `h`, certified on seeded test
/// directions.
pub fn solve_nash(h: &SpaceTimeField, scenario: &Scenario) -> Result<EquilibriumCertificate> {
    let solution = solve_optimality_system(h, scenario)?;
    certify_equilibrium(solution, scenario, Exec::default())
}

pub(crate) fn certify_equilibrium(
    solution: CoupledSolution,
    scenario: &Scenario,
    exec: Exec,
) -> Result<EquilibriumCertificate> {
    let grid = &scenario.grid;
    let controls = solution.controls(scenario);
    let state = &solution.state;
    let mut duality_gap = [0.0; 2];
    let mut scale = [0.0; 2];
    let mut hessian_rayleigh = [f64::INFINITY; 2];
    for i in 0..2 {
        let dirs = test_directions(i, RANDOM_DIRECTIONS, scenario.config.seed, scenario);
        let probes: Vec<Result<(f64, f64)>> = exec.map(dirs.len(), |k| {
            let g = directional_gradient_at(i, &dirs[k], &controls, state, scenario)?;
            let q = hessian_at(i, &dirs[k], state, scenario)?;
            Ok((g, q))
        });
        for (k, r) in probes.into_iter().enumerate() {
            let (g, q) = r?;
            duality_gap[i] = f64::max(duality_gap[i], g.abs());
            let nrm2 = dirs[k].dot_q_left(&dirs[k], grid);
            if nrm2 > 0.0 {
                hessian_rayleigh[i] = hessian_rayleigh[i].min(q / nrm2);
            }
        }
        let d = y_minus_target(i, &state.y, scenario).masked(&scenario.masks.od);
        scale[i] = scenario.alpha[i] * d.norm_q(grid) + scenario.mu[i] * controls.v[i].norm_q_left(grid);
    }
    let functionals = functionals_at(&controls, state, scenario)?;
    Ok(EquilibriumCertificate { solution, controls, duality_gap, scale, hessian_rayleigh, functionals })
}

/// Result of the convexity-threshold search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityThreshold {
    /// Smallest `mu` found with a nonnegative sampled Rayleigh quotient.
    pub mu: f64,
    /// The lower end of the search interval already passes.
    pub at_lower_bound: bool,
    /// No `mu` in the search interval passes.
    pub not_found: bool,
    /// Smallest sampled Rayleigh quotient at `mu + 1`.
    pub rayleigh_above: f64,
    pub evaluations: usize,
}

/// Search interval of the convexity threshold.
pub const MU_RANGE: (f64, f64) = (1e-3, 1e6);

/// Smallest sampled Rayleigh quotient of `J_1''` and `J_2''` at the
/// equilibrium for `h = 0` with both `mu_i` set to `mu`. A fixed point that
/// fails to converge counts as not convex.
pub fn min_rayleigh(mu: f64, scenario: &Scenario, sample_dirs: usize) -> Result<f64> {
    let sc = scenario.with(|c| c.mu = [mu, mu])?;
    let h = SpaceTimeField::zeros(&sc.grid);
    let sol = match solve_optimality_system(&h, &sc) {
        Ok(s) => s,
        Err(Error::FixedPoint { .. }) | Err(Error::Picard { .. }) => return Ok(f64::NEG_INFINITY),
        Err(e) => return Err(e),
    };
    let grid = &sc.grid;
    let mut worst = f64::INFINITY;
    for i in 0..2 {
        let dirs = test_directions(i, sample_dirs, sc.config.seed, &sc);
        let vals: Vec<Result<f64>> = Exec::default().map(dirs.len(), |k| hessian_at(i, &dirs[k], &sol.state, &sc));
        for (k, v) in vals.into_iter().enumerate() {
            let nrm2 = dirs[k].dot_q_left(&dirs[k], grid);
            if nrm2 > 0.0 {
                worst = worst.min(v? / nrm2);
            }
        }
    }
    Ok(worst)
}

/// Bisection in `log mu` over [`MU_RANGE`] to 1% relative width.
pub fn estimate_convexity_threshold(scenario: &Scenario, sample_dirs: usize) -> Result<ConvexityThreshold> {
    let (mut lo, mut hi) = MU_RANGE;
    let mut evaluations = 0;
    let mut eval = |mu: f64| -> Result<f64> {
        evaluations += 1;
        min_rayleigh(mu, scenario, sample_dirs)
    };
    if eval(lo)? >= 0.0 {
        let above = eval(lo + 1.0)?;
        return Ok(ConvexityThreshold {
            mu: lo,
            at_lower_bound: true,
            not_found: false,
            rayleigh_above: above,
            evaluations,
        });
    }
    if eval(hi)? < 0.0 {
        let above = eval(hi + 1.0)?;
        return Ok(ConvexityThreshold {
            mu: hi,
            at_lower_bound: false,
            not_found: true,
            rayleigh_above: above,
            evaluations,
        });
    }
    while hi / lo > 1.01 {
        let mid = (lo * hi).sqrt();
        if eval(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let above = eval(hi + 1.0)?;
    Ok(ConvexityThreshold { mu: hi, at_lower_bound: false, not_found: false, rayleigh_above: above, evaluations })
}
