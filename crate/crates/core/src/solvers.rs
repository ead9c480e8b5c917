//! Initial and terminal value solvers.
//!
//! Time convention. The interval `(t_{n-1}, t_n]` is "interval `n`" for
//! `n = 1..=M`. State-type fields (`y`, `omega`, `theta`) carry the value at
//! `t_n` in row `n`, with row 0 the initial datum. Adjoint-type fields (`p`,
//! `eta`, `phi`) and controls carry in row `n - 1` the value attached to
//! interval `n`, with row `M` the terminal value. Distributed sources and
//! per-step coefficients for interval `n` live in row `n` (entry `n` of a
//! coefficient path).
//!
//! Forward step on interval `n`:
//! `(y^n - y^{n-1})/dt + c_n A y^n = f^n + 1_O h^{n-1} + sum_i 1_{O_i} v_i^{n-1}`.
//! Backward step on interval `n`:
//! `(p^{n-1} - p^n)/dt + c_n A p^{n-1} = G^n`.
//!
//! With this staggering the backward scheme is the exact transpose of the
//! forward scheme in the space-time products, so adjoint gradients agree with
//! finite differences of the discrete functionals.

use crate::error::{Error, Result};
use crate::grid::{Grid, SpaceTimeField};
use crate::laws::NonlocalLaw;
use crate::operator::{assemble_stiffness, EigenBasis, TriDiagOperator, Tridiagonal};
use crate::quadrature::{a_energy, inner, l1_integral};
use crate::scenario::Scenario;

fn interior(row: &[f64]) -> &[f64] {
    &row[1..row.len() - 1]
}

fn put_interior(field: &mut SpaceTimeField, n: usize, vals: &[f64]) {
    let row = field.row_mut(n);
    let len = row.len();
    row[1..len - 1].copy_from_slice(vals);
}

fn with_boundary(vals: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(vals.len() + 2);
    out.push(0.0);
    out.extend_from_slice(vals);
    out.push(0.0);
    out
}

/// Leader and follower controls (adjoint-type rows).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTriple {
    pub h: SpaceTimeField,
    pub v: [SpaceTimeField; 2],
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Provenance {
    Direct,
    Reconstruction,
}

impl ControlTriple {
    pub fn zeros(grid: &Grid) -> Self {
        let z = SpaceTimeField::zeros(grid);
        Self { h: z.clone(), v: [z.clone(), z], provenance: Provenance::Direct }
    }

    pub fn leader_only(h: SpaceTimeField) -> Self {
        let z = SpaceTimeField::zeros_dims(h.rows(), h.cols());
        Self { h, v: [z.clone(), z], provenance: Provenance::Direct }
    }

    /// Interval source `f^n = 1_O h^{n-1} + sum_i 1_{O_i} v_i^{n-1}` in row `n`.
    pub fn source(&self, scenario: &Scenario) -> SpaceTimeField {
        let grid = &scenario.grid;
        let m = &scenario.masks;
        let mut f = SpaceTimeField::zeros(grid);
        for n in 1..=grid.m_steps {
            let (h, v1, v2) = (self.h.row(n - 1), self.v[0].row(n - 1), self.v[1].row(n - 1));
            let row = f.row_mut(n);
            for j in 1..=grid.n_interior {
                row[j] = m.o[j] * h[j] + m.o1[j] * v1[j] + m.o2[j] * v2[j];
            }
        }
        f
    }
}

/// One backward-Euler step: `(I/dt + coeff A) u = u_n/dt + source`.
pub fn step_implicit(u_n: &[f64], op: &TriDiagOperator, coeff: f64, source: &[f64], dt: f64) -> Result<Vec<f64>> {
    if !(coeff > 0.0) {
        return Err(Error::ZeroPivot { row: 0 });
    }
    let rhs: Vec<f64> = u_n.iter().zip(source).map(|(u, f)| u / dt + f).collect();
    op.shifted(1.0 / dt, coeff).solve(&rhs)
}

/// Forward march from `y0` with coefficient `coeff_path[n]` and source row
/// `n` on interval `n`.
pub fn solve_forward_linear(
    y0: &[f64],
    coeff_path: &[f64],
    sources: &SpaceTimeField,
    op: &TriDiagOperator,
    grid: &Grid,
) -> Result<SpaceTimeField> {
    grid.check_len(y0.len())?;
    sources.check(grid)?;
    let mut y = SpaceTimeField::zeros(grid);
    y.set_row(0, y0);
    let mut prev = interior(y0).to_vec();
    for n in 1..=grid.m_steps {
        prev = step_implicit(&prev, op, coeff_path[n], interior(sources.row(n)), grid.dt)?;
        put_interior(&mut y, n, &prev);
    }
    Ok(y)
}

/// Backward march from `p^M = terminal` with coefficient `coeff_path[n]`
/// and source row `n` on interval `n`.
pub fn solve_backward_linear(
    terminal: &[f64],
    coeff_path: &[f64],
    sources: &SpaceTimeField,
    op: &TriDiagOperator,
    grid: &Grid,
) -> Result<SpaceTimeField> {
    grid.check_len(terminal.len())?;
    sources.check(grid)?;
    let mut p = SpaceTimeField::zeros(grid);
    p.set_row(grid.m_steps, terminal);
    let mut next = interior(terminal).to_vec();
    for n in (1..=grid.m_steps).rev() {
        next = step_implicit(&next, op, coeff_path[n], interior(sources.row(n)), grid.dt)?;
        put_interior(&mut p, n - 1, &next);
    }
    Ok(p)
}

/// State trajectory of the nonlocal equation with the nonlocal arguments
/// `g[n] = int y^n dx` used in each step.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlocalSolve {
    pub y: SpaceTimeField,
    pub g: Vec<f64>,
    /// Largest Picard count over all steps.
    pub picard_iterations: usize,
}

/// Advection matrix of the radial reduction (unscaled by `l`).
fn radial_drift(scenario: &Scenario, n_dim: usize) -> Option<Tridiagonal> {
    if n_dim <= 1 {
        return None;
    }
    let grid = &scenario.grid;
    let n = grid.n_interior;
    let k = (n_dim - 1) as f64;
    let mut d = Tridiagonal { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n] };
    for i in 0..n {
        let r = grid.nodes()[i + 1];
        let b = scenario.a_law.a(r) * k / r;
        let peclet = k * grid.h / r;
        if peclet <= 2.0 {
            d.lower[i] = b / (2.0 * grid.h);
            d.upper[i] = -b / (2.0 * grid.h);
        } else {
            d.diag[i] = b / grid.h;
            d.upper[i] = -b / grid.h;
        }
    }
    Some(d)
}

fn step_matrix(op: &TriDiagOperator, coeff: f64, dt: f64, drift: Option<&Tridiagonal>) -> Tridiagonal {
    let mut m = op.shifted(1.0 / dt, coeff);
    if let Some(d) = drift {
        for i in 0..m.diag.len() {
            m.lower[i] += coeff * d.lower[i];
            m.diag[i] += coeff * d.diag[i];
            m.upper[i] += coeff * d.upper[i];
        }
    }
    m
}

pub(crate) fn forward_nonlocal_with_source(
    y0: &[f64],
    source: &SpaceTimeField,
    scenario: &Scenario,
    drift: Option<&Tridiagonal>,
) -> Result<NonlocalSolve> {
    let grid = &scenario.grid;
    grid.check_len(y0.len())?;
    source.check(grid)?;
    let law = &scenario.l_law;
    let op = assemble_stiffness(&scenario.a_law, grid, 1.0);
    let tol = scenario.config.solver.picard_tol;
    let max_iter = scenario.config.solver.picard_max_iter;
    let mut y = SpaceTimeField::zeros(grid);
    y.set_row(0, y0);
    let mut g = vec![0.0; grid.m_steps + 1];
    g[0] = l1_integral(y0, grid)?;
    let mut prev = interior(y0).to_vec();
    let mut worst = 0;
    for n in 1..=grid.m_steps {
        let rhs: Vec<f64> = prev.iter().zip(interior(source.row(n))).map(|(u, f)| u / grid.dt + f).collect();
        let mut arg = g[n - 1];
        let mut iters = 0;
        let next = loop {
            iters += 1;
            let c = law.value(arg);
            if !(c > 0.0) {
                return Err(Error::Picard { step: n, residual: f64::NAN });
            }
            let cand = step_matrix(&op, c, grid.dt, drift).solve(&rhs)?;
            let new_arg = grid.h * cand.iter().sum::<f64>();
            let change = (new_arg - arg).abs();
            if law.is_constant() || change <= tol {
                arg = new_arg;
                break cand;
            }
            if iters >= max_iter {
                return Err(Error::Picard { step: n, residual: change });
            }
            arg = new_arg;
        };
        worst = worst.max(iters);
        g[n] = arg;
        put_interior(&mut y, n, &next);
        prev = next;
    }
    Ok(NonlocalSolve { y, g, picard_iterations: worst })
}

/// State of the nonlocal equation driven by the three controls.
pub fn solve_forward_nonlocal(y0: &[f64], controls: &ControlTriple, scenario: &Scenario) -> Result<NonlocalSolve> {
    forward_nonlocal_with_source(y0, &controls.source(scenario), scenario, None)
}

/// Radial reduction in `n_dim` dimensions; the nonlocal argument is the plain
/// one-dimensional integral. `n_dim = 1` is the plain solver.
pub fn solve_radial(n_dim: usize, y0: &[f64], controls: &ControlTriple, scenario: &Scenario) -> Result<NonlocalSolve> {
    let drift = radial_drift(scenario, n_dim);
    forward_nonlocal_with_source(y0, &controls.source(scenario), scenario, drift.as_ref())
}

/// Radial solve with an explicit distributed source (row `n` on interval `n`).
pub fn solve_radial_with_source(
    n_dim: usize,
    y0: &[f64],
    source: &SpaceTimeField,
    scenario: &Scenario,
) -> Result<NonlocalSolve> {
    let drift = radial_drift(scenario, n_dim);
    forward_nonlocal_with_source(y0, source, scenario, drift.as_ref())
}

/// Exact discrete adjoint of the nonlocal state equation along `state`:
/// `(p^{n-1} - p^n)/dt + l(g_n) A p^{n-1} + l'(g_n) <A y^n, p^{n-1}> 1 = G^n`,
/// `p^M = 0`. The rank-one nonlocal term is solved exactly.
pub fn nonlocal_adjoint(
    state: &NonlocalSolve,
    sources: &SpaceTimeField,
    scenario: &Scenario,
) -> Result<SpaceTimeField> {
    let grid = &scenario.grid;
    let law = &scenario.l_law;
    let op = assemble_stiffness(&scenario.a_law, grid, 1.0);
    let n = grid.n_interior;
    let ones = vec![1.0; n];
    let mut p = SpaceTimeField::zeros(grid);
    let mut next = vec![0.0; n];
    for k in (1..=grid.m_steps).rev() {
        let g = state.g[k];
        let rhs: Vec<f64> = next.iter().zip(interior(sources.row(k))).map(|(u, f)| u / grid.dt + f).collect();
        let mat = op.shifted(1.0 / grid.dt, law.value(g));
        let d1 = law.d1(g);
        next = if d1 == 0.0 {
            mat.solve(&rhs)?
        } else {
            let ay: Vec<f64> = op.apply(interior(state.y.row(k))).iter().map(|v| v * grid.h).collect();
            let u: Vec<f64> = ones.iter().map(|v| v * d1).collect();
            mat.solve_rank_one(&u, &ay, &rhs)?
        };
        put_interior(&mut p, k - 1, &next);
    }
    Ok(p)
}

/// Adjoint source `alpha_i 1_{O_d} (y - y_{i,d})` (rows `1..=M`).
pub fn tracking_source(i: usize, y: &SpaceTimeField, scenario: &Scenario) -> SpaceTimeField {
    let grid = &scenario.grid;
    let mut out = SpaceTimeField::zeros(grid);
    let a = scenario.alpha[i];
    if a == 0.0 {
        return out;
    }
    let od = &scenario.masks.od;
    for n in 1..=grid.m_steps {
        let (yr, tr) = (y.row(n), scenario.targets[i].row(n));
        let row = out.row_mut(n);
        for j in 1..=grid.n_interior {
            row[j] = a * od[j] * (yr[j] - tr[j]);
        }
    }
    out
}

/// Adjoint of follower `i` at a given state.
pub fn follower_adjoint(i: usize, state: &NonlocalSolve, scenario: &Scenario) -> Result<SpaceTimeField> {
    nonlocal_adjoint(state, &tracking_source(i, &state.y, scenario), scenario)
}

/// Solution of the follower optimality system for a fixed leader control.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSolution {
    pub state: NonlocalSolve,
    pub p: [SpaceTimeField; 2],
    pub h: SpaceTimeField,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

impl CoupledSolution {
    pub fn y(&self) -> &SpaceTimeField {
        &self.state.y
    }

    /// Follower controls `v^i = -p^i / mu_i` on `O_i`.
    pub fn controls(&self, scenario: &Scenario) -> ControlTriple {
        let v = [0, 1].map(|i| follower_feedback(i, &self.p[i], scenario));
        ControlTriple { h: self.h.clone(), v, provenance: Provenance::Reconstruction }
    }
}

/// `-p / mu_i` restricted to the support of `1_{O_i}`.
pub fn follower_feedback(i: usize, p: &SpaceTimeField, scenario: &Scenario) -> SpaceTimeField {
    let mask = scenario.masks.follower(i);
    let mu = scenario.mu[i];
    let mut v = p.clone();
    for n in 0..v.rows() {
        for (val, &m) in v.row_mut(n).iter_mut().zip(mask) {
            *val = if m > 0.0 { -*val / mu } else { 0.0 };
        }
    }
    v
}

/// Damped fixed point on the follower adjoints.
pub fn solve_optimality_system(h: &SpaceTimeField, scenario: &Scenario) -> Result<CoupledSolution> {
    let grid = &scenario.grid;
    h.check(grid)?;
    let cfg = scenario.config.solver;
    let omega = cfg.damping;
    let mut p = [SpaceTimeField::zeros(grid), SpaceTimeField::zeros(grid)];
    let mut history = Vec::new();
    for it in 1..=cfg.fp_max_iter {
        let controls = ControlTriple {
            h: h.clone(),
            v: [follower_feedback(0, &p[0], scenario), follower_feedback(1, &p[1], scenario)],
            provenance: Provenance::Reconstruction,
        };
        let state = solve_forward_nonlocal(&scenario.y0, &controls, scenario)?;
        let fresh = [follower_adjoint(0, &state, scenario)?, follower_adjoint(1, &state, scenario)?];
        let mut diff = 0.0;
        let mut size = 0.0;
        for i in 0..2 {
            let mut d = fresh[i].clone();
            d.axpy(-1.0, &p[i]);
            diff += d.dot_q_left(&d, grid);
            size += fresh[i].dot_q_left(&fresh[i], grid);
        }
        let residual = if size > 0.0 { (diff / size).sqrt() } else { diff.sqrt() };
        history.push(residual);
        if !residual.is_finite() {
            break;
        }
        if residual <= cfg.fp_tol {
            let controls = ControlTriple {
                h: h.clone(),
                v: [follower_feedback(0, &fresh[0], scenario), follower_feedback(1, &fresh[1], scenario)],
                provenance: Provenance::Reconstruction,
            };
            let state =
                if residual == 0.0 { state } else { solve_forward_nonlocal(&scenario.y0, &controls, scenario)? };
            return Ok(CoupledSolution { state, p: fresh, h: h.clone(), iterations: it, residual, history });
        }
        for i in 0..2 {
            let mut next = p[i].scaled(1.0 - omega);
            next.axpy(omega, &fresh[i]);
            p[i] = next;
        }
    }
    let residual = history.last().copied().unwrap_or(f64::NAN);
    Err(Error::FixedPoint { iterations: history.len(), residual, history })
}

/// Linearized state `omega` in direction `v_hat` of follower `i` along
/// `state` (zero initial datum).
pub fn solve_sensitivity_omega(
    i: usize,
    v_hat: &SpaceTimeField,
    state: &NonlocalSolve,
    scenario: &Scenario,
) -> Result<SpaceTimeField> {
    let grid = &scenario.grid;
    v_hat.check(grid)?;
    let mask = scenario.masks.follower(i);
    let mut src = SpaceTimeField::zeros(grid);
    for n in 1..=grid.m_steps {
        let vr = v_hat.row(n - 1).to_vec();
        for (j, val) in src.row_mut(n).iter_mut().enumerate() {
            *val = mask[j] * vr[j];
        }
    }
    linearized_forward(state, &src, scenario)
}

/// `(w^n - w^{n-1})/dt + l(g_n) A w^n + l'(g_n) I(w^n) A y^n = f^n`, `w^0 = 0`.
pub(crate) fn linearized_forward(
    state: &NonlocalSolve,
    src: &SpaceTimeField,
    scenario: &Scenario,
) -> Result<SpaceTimeField> {
    let grid = &scenario.grid;
    let law = &scenario.l_law;
    let op = assemble_stiffness(&scenario.a_law, grid, 1.0);
    let n = grid.n_interior;
    let hvec = vec![grid.h; n];
    let mut w = SpaceTimeField::zeros(grid);
    let mut prev = vec![0.0; n];
    for k in 1..=grid.m_steps {
        let g = state.g[k];
        let rhs: Vec<f64> = prev.iter().zip(interior(src.row(k))).map(|(u, f)| u / grid.dt + f).collect();
        let mat = op.shifted(1.0 / grid.dt, law.value(g));
        let d1 = law.d1(g);
        prev = if d1 == 0.0 {
            mat.solve(&rhs)?
        } else {
            let u: Vec<f64> = op.apply(interior(state.y.row(k))).iter().map(|v| v * d1).collect();
            mat.solve_rank_one(&u, &hvec, &rhs)?
        };
        put_interior(&mut w, k, &prev);
    }
    Ok(w)
}

/// Second-order pair for follower `i` in direction `v_bar`: `theta` is the
/// linearized state, `eta` the linearized adjoint. `phi` is the follower's
/// adjoint along `state`.
pub fn solve_second_order_pair(
    i: usize,
    v_bar: &SpaceTimeField,
    state: &NonlocalSolve,
    phi: &SpaceTimeField,
    scenario: &Scenario,
) -> Result<(SpaceTimeField, SpaceTimeField)> {
    let grid = &scenario.grid;
    let law = &scenario.l_law;
    let op = assemble_stiffness(&scenario.a_law, grid, 1.0);
    let theta = solve_sensitivity_omega(i, v_bar, state, scenario)?;
    let n = grid.n_interior;
    let od = &scenario.masks.od;
    let alpha = scenario.alpha[i];
    let ones = vec![1.0; n];
    let mut eta = SpaceTimeField::zeros(grid);
    let mut next = vec![0.0; n];
    for k in (1..=grid.m_steps).rev() {
        let g = state.g[k];
        let (d1, d2) = (law.d1(g), law.d2(g));
        let th = interior(theta.row(k));
        let ph = interior(phi.row(k - 1));
        let yk = interior(state.y.row(k));
        let int_theta = grid.h * th.iter().sum::<f64>();
        let a_phi = op.apply(ph);
        let ay: Vec<f64> = op.apply(yk);
        let ay_phi = grid.h * ay.iter().zip(ph).map(|(a, b)| a * b).sum::<f64>();
        let a_theta_phi = grid.h * a_phi.iter().zip(th).map(|(a, b)| a * b).sum::<f64>();
        let constant = d2 * int_theta * ay_phi + d1 * a_theta_phi;
        let rhs: Vec<f64> = (0..n)
            .map(|j| next[j] / grid.dt + alpha * od[j + 1] * th[j] - d1 * int_theta * a_phi[j] - constant)
            .collect();
        let mat = op.shifted(1.0 / grid.dt, law.value(g));
        next = if d1 == 0.0 {
            mat.solve(&rhs)?
        } else {
            let u: Vec<f64> = ones.iter().map(|v| v * d1).collect();
            let w: Vec<f64> = ay.iter().map(|v| v * grid.h).collect();
            mat.solve_rank_one(&u, &w, &rhs)?
        };
        put_interior(&mut eta, k - 1, &next);
    }
    Ok((eta, theta))
}

/// Galerkin solve in the span of the given modes, with the same
/// backward-Euler and Picard strategy as the finite-volume solver.
pub fn solve_galerkin(
    y0: &[f64],
    controls: &ControlTriple,
    scenario: &Scenario,
    basis: &EigenBasis,
) -> Result<NonlocalSolve> {
    let grid = &scenario.grid;
    grid.check_len(y0.len())?;
    let law: &NonlocalLaw = &scenario.l_law;
    let cfg = scenario.config.solver;
    let source = controls.source(scenario);
    let project = |row: &[f64]| -> Vec<f64> {
        let u = with_boundary(interior(row));
        basis.modes.iter().map(|w| inner(&with_boundary(w), &u, grid.h)).collect()
    };
    let lift = |c: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; grid.n_interior];
        for (ck, w) in c.iter().zip(&basis.modes) {
            out.iter_mut().zip(w).for_each(|(o, v)| *o += ck * v);
        }
        out
    };
    let masses: Vec<f64> = basis.modes.iter().map(|w| grid.h * w.iter().sum::<f64>()).collect();
    let mut y = SpaceTimeField::zeros(grid);
    let mut c = project(y0);
    y.set_row(0, &with_boundary(&lift(&c)));
    let mut g = vec![0.0; grid.m_steps + 1];
    g[0] = c.iter().zip(&masses).map(|(a, b)| a * b).sum();
    let mut worst = 0;
    for n in 1..=grid.m_steps {
        let f = project(source.row(n));
        let mut arg = g[n - 1];
        let mut iters = 0;
        let next = loop {
            iters += 1;
            let coeff = law.value(arg);
            let cand: Vec<f64> =
                (0..basis.k).map(|k| (c[k] / grid.dt + f[k]) / (1.0 / grid.dt + coeff * basis.lambdas[k])).collect();
            let new_arg: f64 = cand.iter().zip(&masses).map(|(a, b)| a * b).sum();
            let change = (new_arg - arg).abs();
            arg = new_arg;
            if law.is_constant() || change <= cfg.picard_tol {
                break cand;
            }
            if iters >= cfg.picard_max_iter {
                return Err(Error::Picard { step: n, residual: change });
            }
        };
        worst = worst.max(iters);
        g[n] = arg;
        c = next;
        y.set_row(n, &with_boundary(&lift(&c)));
    }
    Ok(NonlocalSolve { y, g, picard_iterations: worst })
}

/// Energy bound of a linear forward solve: `sup_n ||y^n||^2 + k sum dt
/// ||sqrt(a) y_x^n||^2` against `||y0||^2 + sum dt ||f^n||^2`, where
/// `k = min(1, 2 c_min)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EnergyCheck {
    pub energy: f64,
    pub data: f64,
    pub ratio: f64,
    pub margin: f64,
    pub passed: bool,
}

pub fn linear_energy_check(
    y: &SpaceTimeField,
    sources: &SpaceTimeField,
    coeff_min: f64,
    scenario: &Scenario,
) -> EnergyCheck {
    let grid = &scenario.grid;
    let mut sup: f64 = 0.0;
    let mut grad = 0.0;
    for n in 0..=grid.m_steps {
        let r = y.row(n);
        sup = sup.max(inner(r, r, grid.h));
        if n > 0 {
            grad += grid.dt * a_energy(r, r, &scenario.a_law, grid);
        }
    }
    let energy = sup + (2.0 * coeff_min).min(1.0) * grad;
    let y0 = y.row(0);
    let data = inner(y0, y0, grid.h) + sources.dot_q(sources, grid);
    energy_verdict(energy, data, grid.t_final)
}

fn energy_verdict(energy: f64, data: f64, t_final: f64) -> EnergyCheck {
    let margin = (2.0 * t_final).exp() * (1.0 + t_final);
    let ratio = if data > 0.0 {
        energy / data
    } else if energy == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    EnergyCheck { energy, data, ratio, margin, passed: ratio <= margin }
}

/// Energy of the coupled follower system, `sup_n (||y^n||^2 + sum_i
/// ||p_i^n||^2)` plus the dissipation integrals weighted by the smallest
/// sampled `l`, against the data size `||y0||^2 + ||1_O h||^2 + sum_i
/// alpha_i^2 ||1_{O_d} y_{i,d}||^2`.
pub fn coupled_energy_check(sol: &CoupledSolution, scenario: &Scenario) -> EnergyCheck {
    let grid = &scenario.grid;
    let y = sol.y();
    let l_min = sol.state.g.iter().map(|&g| scenario.l_law.value(g)).fold(f64::INFINITY, f64::min);
    let mut sup: f64 = 0.0;
    let mut diss = 0.0;
    for n in 0..=grid.m_steps {
        let mut e = inner(y.row(n), y.row(n), grid.h);
        for p in &sol.p {
            e += inner(p.row(n), p.row(n), grid.h);
        }
        sup = sup.max(e);
        if n > 0 {
            diss += grid.dt * a_energy(y.row(n), y.row(n), &scenario.a_law, grid);
            for p in &sol.p {
                diss += grid.dt * a_energy(p.row(n - 1), p.row(n - 1), &scenario.a_law, grid);
            }
        }
    }
    let energy = sup + l_min.min(1.0) * diss;
    let y0 = &scenario.y0;
    let h = sol.h.masked(&scenario.masks.o);
    let mut data = inner(y0, y0, grid.h) + h.dot_q_left(&h, grid);
    for i in 0..2 {
        let t = scenario.weighted_target(i);
        data += t.dot_q(&t, grid);
    }
    energy_verdict(energy, data, grid.t_final)
}
