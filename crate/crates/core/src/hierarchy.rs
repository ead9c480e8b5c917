//! Nonlinear hierarchy: the map `A(y, p_1, p_2, h)` of the coupled
//! state/adjoint system and the frozen-derivative (Liusternik) iteration
//! that inverts it with the linear control solver.
//!
//! Each outer step solves `DA(0) z^{k+1} = (0, -alpha_i 1_{O_d} y_{i,d}, y0) - N(z^k)`
//! with the Lax-Milgram control of [`crate::control`], where
//! `N(z) = A(z) - DA(0) z - A(0)` collects every nonlinear term. The remainder
//! is obtained by evaluating the residual map twice, once with `l` and once
//! with the constant law `l(0)`.

use serde::Serialize;

use crate::checks::Check;
use crate::control::{data_norms, LaxMilgram, LinearData};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::extreal::ExtReal;
use crate::grid::{Grid, SpaceTimeField};
use crate::laws::NonlocalLaw;
use crate::nash::{directional_gradient, test_directions, RANDOM_DIRECTIONS};
use crate::operator::assemble_stiffness;
use crate::quadrature::{a_energy, inner};
use crate::scenario::Scenario;
use crate::solvers::{follower_feedback, solve_forward_nonlocal, solve_optimality_system, ControlTriple, Provenance};
use crate::weights::{weights_for, WeightSet};

/// Unknown of the nonlinear map. `y` is state-type, `p` and `h` are
/// adjoint-type (row `k` belongs to interval `k + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyState {
    pub y: SpaceTimeField,
    pub p: [SpaceTimeField; 2],
    pub h: SpaceTimeField,
}

impl HierarchyState {
    pub fn zeros(grid: &Grid) -> Self {
        let z = SpaceTimeField::zeros(grid);
        HierarchyState { y: z.clone(), p: [z.clone(), z.clone()], h: z }
    }

    /// Follower controls `v^i = -p^i / mu_i` on `O_i` and the leader control.
    pub fn controls(&self, scenario: &Scenario) -> ControlTriple {
        ControlTriple {
            h: self.h.clone(),
            v: [follower_feedback(0, &self.p[0], scenario), follower_feedback(1, &self.p[1], scenario)],
            provenance: Provenance::Reconstruction,
        }
    }
}

/// Values of the residual map. `r0`, `r1`, `r2` hold interval `n` in row `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualQuadruple {
    pub r0: SpaceTimeField,
    pub r1: SpaceTimeField,
    pub r2: SpaceTimeField,
    /// `y(., 0) - y0`.
    pub r3: Vec<f64>,
    /// `||rho_2 r0||^2 + sum_i ||rho_2 r_i||^2 + ||r3||^2_{H_a^1}`, saturating
    /// to infinity outside the `f64` range.
    pub weighted_norm: f64,
    /// `log10` of `weighted_norm`, exact for any magnitude.
    pub weighted_log10: f64,
    /// Unweighted `L^2(Q)` norm of `(r0, r1, r2)`.
    pub plain_norm: f64,
}

/// Residuals of the discrete system with diffusion multiplier `law`:
///
/// * `r0^n = (y^n - y^{n-1})/dt + l(g_n) A y^n + sum_i 1_{O_i} p_i^{n-1}/mu_i - 1_O h^{n-1}`
/// * `r_i^n = (p_i^{n-1} - p_i^n)/dt + l(g_n) A p_i^{n-1} + l'(g_n) <A y^n, p_i^{n-1}> - alpha_i 1_{O_d}(y^n - y_{i,d}^n)`
///
/// with `g_n = int y^n dx`.
fn residual_fields(z: &HierarchyState, law: &NonlocalLaw, scenario: &Scenario) -> [SpaceTimeField; 3] {
    let grid = &scenario.grid;
    let nn = grid.n_interior;
    let op = assemble_stiffness(&scenario.a_law, grid, 1.0);
    let m = &scenario.masks;
    let mut out = [SpaceTimeField::zeros(grid), SpaceTimeField::zeros(grid), SpaceTimeField::zeros(grid)];
    for n in 1..=grid.m_steps {
        let y = z.y.row(n);
        let yp = z.y.row(n - 1);
        let g = grid.h * y[1..=nn].iter().sum::<f64>();
        let (c, d1) = (law.value(g), law.d1(g));
        let ay = op.apply(&y[1..=nn]);
        let row = out[0].row_mut(n);
        for j in 1..=nn {
            row[j] = (y[j] - yp[j]) / grid.dt
                + c * ay[j - 1]
                + m.o1[j] * z.p[0].get(n - 1, j) / scenario.mu[0]
                + m.o2[j] * z.p[1].get(n - 1, j) / scenario.mu[1]
                - m.o[j] * z.h.get(n - 1, j);
        }
        for i in 0..2 {
            let p = z.p[i].row(n - 1);
            let pn = z.p[i].row(n);
            let ap = op.apply(&p[1..=nn]);
            let coupling =
                if d1 == 0.0 { 0.0 } else { d1 * grid.h * ay.iter().zip(&p[1..=nn]).map(|(a, b)| a * b).sum::<f64>() };
            let target = scenario.targets[i].row(n);
            let row = out[1 + i].row_mut(n);
            for j in 1..=nn {
                row[j] = (p[j] - pn[j]) / grid.dt + c * ap[j - 1] + coupling
                    - scenario.alpha[i] * m.od[j] * (y[j] - target[j]);
            }
        }
    }
    out
}

/// `sum_n dt rho_2(t)^2 ||r^n||^2` with the weight taken at `t_n` for the
/// state row and at `t_{n-1}` for the adjoint rows.
fn weighted_residual(fields: &[SpaceTimeField; 3], r3: &[f64], weights: &WeightSet, scenario: &Scenario) -> ExtReal {
    let grid = &scenario.grid;
    let mut acc = ExtReal::ZERO;
    for n in 1..=grid.m_steps {
        for (k, f) in fields.iter().enumerate() {
            let r = f.row(n);
            let v = grid.dt * inner(r, r, grid.h);
            if v > 0.0 {
                let t = if k == 0 { n } else { n - 1 };
                acc = acc + ExtReal::from_f64(v) / weights.rho2_inv2(t);
            }
        }
    }
    let r3v = inner(r3, r3, grid.h) + a_energy(r3, r3, &scenario.a_law, grid);
    acc + ExtReal::from_f64(r3v)
}

/// The residual map at `z`.
pub fn eval_a(z: &HierarchyState, weights: &WeightSet, scenario: &Scenario) -> ResidualQuadruple {
    let [r0, r1, r2] = residual_fields(z, &scenario.l_law, scenario);
    let r3: Vec<f64> = z.y.row(0).iter().zip(&scenario.y0).map(|(a, b)| a - b).collect();
    let w = weighted_residual(&[r0.clone(), r1.clone(), r2.clone()], &r3, weights, scenario);
    let grid = &scenario.grid;
    let plain_norm = (r0.dot_q(&r0, grid) + r1.dot_q(&r1, grid) + r2.dot_q(&r2, grid)).sqrt();
    ResidualQuadruple { r0, r1, r2, r3, weighted_norm: w.to_f64(), weighted_log10: w.log10(), plain_norm }
}

/// Nonlinear remainder `N(z)` (three fields, interval rows).
pub fn remainder(z: &HierarchyState, scenario: &Scenario) -> [SpaceTimeField; 3] {
    let mut full = residual_fields(z, &scenario.l_law, scenario);
    let frozen = NonlocalLaw::Constant { c0: scenario.l_law.value(0.0) };
    let lin = residual_fields(z, &frozen, scenario);
    for (f, l) in full.iter_mut().zip(&lin) {
        f.axpy(-1.0, l);
    }
    full
}

/// Outcome of the outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyResult {
    pub state: HierarchyState,
    pub v: [SpaceTimeField; 2],
    /// Relative weighted residual after each linear solve.
    pub history: Vec<f64>,
    /// Ratios of consecutive residuals.
    pub contraction: Vec<f64>,
    pub outer_iterations: usize,
    pub cg_iterations: Vec<usize>,
    /// `||y(T)||` of the reconstructed state.
    pub final_norm_reconstructed: f64,
    /// `||y(T)||` of the nonlinear follower system re-solved with `h`.
    pub final_norm: f64,
    /// `||y0||_{H_a^1}`.
    pub delta: f64,
    pub residual: f64,
}

impl HierarchyResult {
    pub fn max_contraction(&self) -> f64 {
        self.contraction.iter().copied().fold(0.0, f64::max)
    }
}

fn final_norm(y: &SpaceTimeField, grid: &Grid) -> f64 {
    let r = y.row(grid.m_steps);
    inner(r, r, grid.h).sqrt()
}

/// Frozen-derivative iteration. `tol` applies to the weighted residual
/// relative to the size of the data `(y0, alpha_i 1_{O_d} y_{i,d})`.
pub fn liusternik_solve(scenario: &Scenario, max_outer: usize, tol: f64) -> Result<HierarchyResult> {
    let (_, _, weights) = weights_for(scenario)?;
    liusternik_with(scenario, &weights, max_outer, tol, Exec::default())
}

pub fn liusternik_with(
    scenario: &Scenario,
    weights: &WeightSet,
    max_outer: usize,
    tol: f64,
    exec: Exec,
) -> Result<HierarchyResult> {
    let grid = &scenario.grid;
    let lm = LaxMilgram::new(scenario, weights, exec);
    let base = LinearData::from_scenario(scenario);
    let (kappa0, _) = data_norms(&base, weights, scenario);
    let reference = if kappa0 > 0.0 { kappa0.sqrt() } else { 1.0 };
    let mut history = Vec::new();
    let mut cg_iterations = Vec::new();
    let mut previous: [SpaceTimeField; 3] = [0, 1, 2].map(|_| SpaceTimeField::zeros(grid));
    let mut start: Option<Vec<f64>> = None;
    let mut data = base.clone();
    loop {
        let (unknown, stats) = lm.solve(&data, start.as_deref())?;
        cg_iterations.push(stats.iterations);
        let (y, p, h) = lm.reconstruct_fields(&unknown, &data);
        let z = HierarchyState { y, p, h };
        let rem = remainder(&z, scenario);
        let mut diff = rem.clone();
        for (d, q) in diff.iter_mut().zip(&previous) {
            d.axpy(-1.0, q);
        }
        let zero = vec![0.0; grid.n_nodes()];
        let r = weighted_residual(&diff, &zero, weights, scenario).to_f64().sqrt() / reference;
        history.push(r);
        let k = history.len();
        if r <= tol {
            return finish(z, history, cg_iterations, scenario);
        }
        if k >= 3 && history[k - 1] > history[k - 2] && history[k - 2] > history[k - 3] {
            return Err(Error::Divergence { iterations: k, history });
        }
        if !r.is_finite() {
            return Err(Error::Divergence { iterations: k, history });
        }
        if k >= max_outer {
            return Err(Error::OuterLimit { iterations: k, residual: r, history });
        }
        data = LinearData {
            y0: base.y0.clone(),
            h: rem[0].scaled(-1.0),
            h_i: [0, 1].map(|i| {
                let mut f = base.h_i[i].clone();
                f.axpy(-1.0, &rem[1 + i]);
                f
            }),
        };
        previous = rem;
        start = Some(unknown);
    }
}

fn finish(
    z: HierarchyState,
    history: Vec<f64>,
    cg_iterations: Vec<usize>,
    scenario: &Scenario,
) -> Result<HierarchyResult> {
    let grid = &scenario.grid;
    let contraction = history.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect();
    let v = [follower_feedback(0, &z.p[0], scenario), follower_feedback(1, &z.p[1], scenario)];
    let resolved = solve_optimality_system(&z.h, scenario)?;
    let y0 = &scenario.y0;
    let delta = (inner(y0, y0, grid.h) + a_energy(y0, y0, &scenario.a_law, grid)).sqrt();
    Ok(HierarchyResult {
        final_norm_reconstructed: final_norm(&z.y, grid),
        final_norm: final_norm(resolved.y(), grid),
        residual: *history.last().unwrap_or(&0.0),
        outer_iterations: history.len(),
        state: z,
        v,
        history,
        contraction,
        cg_iterations,
        delta,
    })
}

/// One sample of the radius search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusSample {
    /// Factor applied to the scenario's initial datum.
    pub factor: f64,
    /// `||y0||_{H_a^1}` of the scaled datum.
    pub delta: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub max_contraction: f64,
    /// Failure message when the iteration did not converge.
    pub failure: Option<String>,
}

/// Empirical controllability radius.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusReport {
    /// Largest converging `||y0||_{H_a^1}` found.
    pub delta_star: f64,
    /// Smallest failing `||y0||_{H_a^1}` found (`None` if every sample converged).
    pub delta_fail: Option<f64>,
    pub samples: Vec<RadiusSample>,
}

fn radius_sample(
    factor: f64,
    scenario: &Scenario,
    weights: &WeightSet,
    max_outer: usize,
    tol: f64,
) -> Result<RadiusSample> {
    let sc = scenario.with(|c| c.y0 = c.y0.scaled(factor))?;
    let grid = &sc.grid;
    let delta = (inner(&sc.y0, &sc.y0, grid.h) + a_energy(&sc.y0, &sc.y0, &sc.a_law, grid)).sqrt();
    let sample = match liusternik_with(&sc, weights, max_outer, tol, Exec::Sequential) {
        Ok(r) => RadiusSample {
            factor,
            delta,
            converged: true,
            outer_iterations: r.outer_iterations,
            max_contraction: r.max_contraction(),
            failure: None,
        },
        Err(e) if e.class() != crate::error::ErrorClass::Config => {
            let (iterations, history) = match &e {
                Error::Divergence { iterations, history } | Error::OuterLimit { iterations, history, .. } => {
                    (*iterations, history.clone())
                }
                _ => (0, vec![]),
            };
            let max_contraction = history.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
            RadiusSample {
                factor,
                delta,
                converged: false,
                outer_iterations: iterations,
                max_contraction,
                failure: Some(e.to_string()),
            }
        }
        Err(e) => return Err(e),
    };
    Ok(sample)
}

/// Doubles the datum factor from `factor0` for `doublings` steps (the
/// batch runs in parallel), then bisects between the last success and the
/// first failure `bisections` times.
pub fn controllability_radius(
    scenario: &Scenario,
    factor0: f64,
    doublings: usize,
    bisections: usize,
    max_outer: usize,
    tol: f64,
) -> Result<RadiusReport> {
    let (_, _, weights) = weights_for(scenario)?;
    let factors: Vec<f64> = (0..=doublings).map(|k| factor0 * 2f64.powi(k as i32)).collect();
    let batch: Vec<Result<RadiusSample>> =
        Exec::default().map(factors.len(), |k| radius_sample(factors[k], scenario, &weights, max_outer, tol));
    let mut samples = Vec::new();
    for s in batch {
        samples.push(s?);
    }
    let first_fail = samples.iter().position(|s| !s.converged);
    let Some(ff) = first_fail else {
        let delta_star = samples.last().map(|s| s.delta).unwrap_or(0.0);
        return Ok(RadiusReport { delta_star, delta_fail: None, samples });
    };
    if ff == 0 {
        return Ok(RadiusReport { delta_star: 0.0, delta_fail: Some(samples[0].delta), samples });
    }
    let (mut lo, mut hi) = (factors[ff - 1], factors[ff]);
    let mut best = samples[ff - 1].delta;
    let mut fail = samples[ff].delta;
    for _ in 0..bisections {
        let mid = 0.5 * (lo + hi);
        let s = radius_sample(mid, scenario, &weights, max_outer, tol)?;
        if s.converged {
            lo = mid;
            best = s.delta;
        } else {
            hi = mid;
            fail = s.delta;
        }
        samples.push(s);
    }
    Ok(RadiusReport { delta_star: best, delta_fail: Some(fail), samples })
}

/// Checks at a converged solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    /// `log10` of the weighted residual norm on the solve grid.
    pub coarse_log10: f64,
    /// Same quantity after interpolation to the grid refined twice in each
    /// direction.
    pub refined_log10: f64,
    /// Refined over coarse weighted residual.
    pub growth_factor: f64,
    /// Unweighted residual relative to the unweighted size of its terms.
    pub discrete_residual: f64,
    pub nash_gaps: [f64; 2],
    pub nash_scale: [f64; 2],
    /// `log10` of the weighted norms of `y`, `p_1`, `p_2` (with `rho_0`) and
    /// `h` (with `rho_1`).
    pub membership_log10: [f64; 4],
    /// `||y - y(h, v)||_{L^2(Q)}` with `y(h, v)` the nonlinear state driven by
    /// the returned controls.
    pub coupling_gap: f64,
    pub checks: Vec<Check>,
}

/// Linear interpolation of a field onto the grid refined twice in each
/// direction.
pub fn refine_field(f: &SpaceTimeField, fine: &Grid) -> SpaceTimeField {
    let mut out = SpaceTimeField::zeros(fine);
    let cols = f.cols();
    for n in 0..out.rows() {
        let (a, b, w) = if n % 2 == 0 { (n / 2, n / 2, 0.0) } else { (n / 2, n / 2 + 1, 0.5) };
        let coarse: Vec<f64> = (0..cols).map(|j| (1.0 - w) * f.get(a, j) + w * f.get(b.min(f.rows() - 1), j)).collect();
        let row = out.row_mut(n);
        for (j, v) in row.iter_mut().enumerate() {
            *v = if j % 2 == 0 { coarse[j / 2] } else { 0.5 * (coarse[j / 2] + coarse[j / 2 + 1]) };
        }
    }
    out
}

/// Unweighted size of the time-derivative and diffusion terms of the map.
fn term_scale(z: &HierarchyState, scenario: &Scenario) -> f64 {
    let grid = &scenario.grid;
    let op = assemble_stiffness(&scenario.a_law, grid, scenario.l_law.bound_l0());
    let nn = grid.n_interior;
    let mut acc = 0.0;
    for n in 1..=grid.m_steps {
        let ay = op.apply(&z.y.row(n)[1..=nn]);
        let mut row: Vec<f64> =
            (1..=nn).map(|j| (z.y.get(n, j) - z.y.get(n - 1, j)).abs() / grid.dt + ay[j - 1].abs()).collect();
        for p in &z.p {
            let ap = op.apply(&p.row(n - 1)[1..=nn]);
            for j in 1..=nn {
                row[j - 1] += (p.get(n - 1, j) - p.get(n, j)).abs() / grid.dt + ap[j - 1].abs();
            }
        }
        acc += grid.dt * grid.h * row.iter().map(|v| v * v).sum::<f64>();
    }
    acc.sqrt()
}

/// Refined-grid residual, Nash gaps, weighted-norm membership and the
/// follower coupling identity.
pub fn certify_result(result: &HierarchyResult, scenario: &Scenario) -> Result<Certificate> {
    let grid = &scenario.grid;
    let (_, _, weights) = weights_for(scenario)?;
    let z = &result.state;
    let coarse = eval_a(z, &weights, scenario);
    let fine_sc = scenario.resampled(2 * grid.n_interior + 1, 2 * grid.m_steps)?;
    let (_, _, fine_w) = weights_for(&fine_sc)?;
    let fine = HierarchyState {
        y: refine_field(&z.y, &fine_sc.grid),
        p: [refine_field(&z.p[0], &fine_sc.grid), refine_field(&z.p[1], &fine_sc.grid)],
        h: refine_field(&z.h, &fine_sc.grid),
    };
    let refined = eval_a(&fine, &fine_w, &fine_sc);
    let coarse_log10 = coarse.weighted_log10 / 2.0;
    let refined_log10 = refined.weighted_log10 / 2.0;
    let growth_factor = 10f64.powf(refined_log10 - coarse_log10);
    let scale = term_scale(z, scenario);
    let discrete_residual = if scale > 0.0 { coarse.plain_norm / scale } else { coarse.plain_norm };

    let controls = z.controls(scenario);
    let state = solve_forward_nonlocal(&scenario.y0, &controls, scenario)?;
    let mut d = state.y.clone();
    d.axpy(-1.0, &z.y);
    let coupling_gap = d.norm_q(grid);
    let coupling_scale = z.y.norm_q(grid).max(inner(&scenario.y0, &scenario.y0, grid.h).sqrt());

    let mut nash_gaps = [0.0; 2];
    let mut nash_scale = [0.0; 2];
    for i in 0..2 {
        for dir in test_directions(i, RANDOM_DIRECTIONS, scenario.config.seed, scenario) {
            nash_gaps[i] = f64::max(nash_gaps[i], directional_gradient(i, &dir, &controls, scenario)?.abs());
        }
        let mut e = state.y.clone();
        e.axpy(-1.0, &scenario.targets[i]);
        nash_scale[i] = scenario.alpha[i] * e.masked(&scenario.masks.od).norm_q(grid)
            + scenario.mu[i] * controls.v[i].norm_q_left(grid);
    }

    let weighted = |f: &SpaceTimeField, left: bool, inv2: &dyn Fn(usize) -> ExtReal| -> f64 {
        let rows: Vec<usize> = if left { (0..grid.m_steps).collect() } else { (1..=grid.m_steps).collect() };
        let mut acc = ExtReal::ZERO;
        for n in rows {
            let v = grid.dt * inner(f.row(n), f.row(n), grid.h);
            if v > 0.0 {
                acc = acc + ExtReal::from_f64(v) / inv2(n);
            }
        }
        acc.log10() / 2.0
    };
    let r0 = |n: usize| weights.rho0_inv2(n);
    let r1 = |n: usize| weights.rho1_inv2(n);
    let membership_log10 = [
        weighted(&z.y, false, &r0),
        weighted(&z.p[0], true, &r0),
        weighted(&z.p[1], true, &r0),
        weighted(&z.h.masked(&scenario.masks.o), true, &r1),
    ];
    let tol = 1e-6;
    let checks = vec![
        Check::at_most("refined residual growth <= 4", growth_factor, 4.0),
        Check::at_most("discrete residual <= 1e-6", discrete_residual, 1e-6),
        Check::at_most("Nash gap 1 <= 1e-6 scale", nash_gaps[0], tol * nash_scale[0].max(f64::MIN_POSITIVE)),
        Check::at_most("Nash gap 2 <= 1e-6 scale", nash_gaps[1], tol * nash_scale[1].max(f64::MIN_POSITIVE)),
        Check::holds(
            "weighted norms finite",
            membership_log10.iter().all(|v| v.is_finite() || *v == f64::NEG_INFINITY),
        ),
        Check::at_most("state driven by (h, v) matches", coupling_gap, 1e-6 * coupling_scale.max(f64::MIN_POSITIVE)),
    ];
    Ok(Certificate {
        coarse_log10,
        refined_log10,
        growth_factor,
        discrete_residual,
        nash_gaps,
        nash_scale,
        membership_log10,
        coupling_gap,
        checks,
    })
}
