//! Linearized null control of the leader.
//!
//! The control comes from the Lax-Milgram problem `b(z_hat, z) = <S, z>` over
//! adjoint triples `z = (phi, psi_1, psi_2)`, solved matrix-free by
//! Jacobi-preconditioned conjugate gradients. The residual operators below
//! are the exact transposes of the backward-Euler schemes in
//! [`crate::solvers`], so the reconstructed triple `(y, p_1, p_2, h)` solves
//! the discrete linear system up to the CG tolerance.
//!
//! Layout of a triple (interior values only, `N` per row):
//! `phi` rows `0..M` (row `M` is zero), then `psi_1` and `psi_2` rows `1..=M`
//! (row 0 is zero). Residuals for interval `n`:
//!
//! * `r0^n = (phi^{n-1} - phi^n)/dt + l0 A phi^{n-1} - sum_i alpha_i 1_{O_d} psi_i^n`,
//!   weighted by `rho_0^{-2}(t_n)`;
//! * `r_i^n = (psi_i^n - psi_i^{n-1})/dt + l0 A psi_i^n + 1_{O_i} phi^{n-1} / mu_i`,
//!   weighted by `rho_0^{-2}(t_{n-1})`;
//! * observation `1_O |phi^{n-1}|^2`, weighted by `rho_1^{-2}(t_{n-1})`.

use serde::Serialize;

use crate::checks::Check;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::extreal::ExtReal;
use crate::grid::{Grid, SpaceTimeField};
use crate::operator::{assemble_stiffness, TriDiagOperator};
use crate::quadrature::{a_energy, inner};
use crate::scenario::Scenario;
use crate::solvers::{solve_backward_linear, solve_forward_linear};
use crate::weights::WeightSet;

/// Data of the linear control problem. `h` and `h_i` hold the interval
/// sources in rows `1..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearData {
    pub y0: Vec<f64>,
    pub h: SpaceTimeField,
    pub h_i: [SpaceTimeField; 2],
}

impl LinearData {
    /// Initial datum and tracking data of the scenario: `H = 0`,
    /// `H_i = -alpha_i 1_{O_d} y_{i,d}`.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let grid = &scenario.grid;
        LinearData {
            y0: scenario.y0.clone(),
            h: SpaceTimeField::zeros(grid),
            h_i: [0, 1].map(|i| scenario.weighted_target(i).scaled(-1.0)),
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        let z = SpaceTimeField::zeros(grid);
        LinearData { y0: vec![0.0; grid.n_nodes()], h: z.clone(), h_i: [z.clone(), z] }
    }

    pub fn scaled(&self, c: f64) -> Self {
        LinearData {
            y0: self.y0.iter().map(|v| v * c).collect(),
            h: self.h.scaled(c),
            h_i: [self.h_i[0].scaled(c), self.h_i[1].scaled(c)],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.y0.iter().all(|&v| v == 0.0) && self.h.is_zero() && self.h_i.iter().all(|f| f.is_zero())
    }
}

/// Lax-Milgram unknown `(phi, psi_1, psi_2)` as full-grid fields.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTriple {
    pub phi: SpaceTimeField,
    pub psi: [SpaceTimeField; 2],
}

/// Matrix-free Lax-Milgram system for one scenario and weight set.
#[derive(Debug, Clone)]
pub struct LaxMilgram<'a> {
    scenario: &'a Scenario,
    op: TriDiagOperator,
    /// `rho_0^{-2}` and `rho_1^{-2}` at time nodes, divided by `peak`.
    w0: Vec<f64>,
    w1: Vec<f64>,
    peak: ExtReal,
    precond: Vec<RowBlock>,
    exec: Exec,
}

/// Conjugate-gradient statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
    /// Values of `b(z,z)/2 - <S,z>` after each iteration.
    pub energy: Vec<f64>,
    pub energy_monotone: bool,
}

impl<'a> LaxMilgram<'a> {
    pub fn new(scenario: &'a Scenario, weights: &WeightSet, exec: Exec) -> Self {
        let l0 = scenario.l_law.value(0.0);
        let op = assemble_stiffness(&scenario.a_law, &scenario.grid, l0);
        let (w0, w1, peak) = weights.normalized_inverse_weights();
        let mut lm = LaxMilgram { scenario, op, w0, w1, peak, precond: vec![], exec };
        lm.precond = lm.preconditioner();
        lm
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    fn n(&self) -> usize {
        self.scenario.grid.n_interior
    }

    fn m(&self) -> usize {
        self.scenario.grid.m_steps
    }

    /// Number of unknowns, `3 M N`.
    pub fn len(&self) -> usize {
        3 * self.m() * self.n()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Common factor of the stored inverse weights.
    pub fn weight_peak(&self) -> ExtReal {
        self.peak
    }

    // Slices of the unknown vector. `phi(k)` for k in 0..M, `psi(i, k)` for k in 1..=M.
    fn phi<'z>(&self, z: &'z [f64], k: usize) -> &'z [f64] {
        let n = self.n();
        &z[k * n..(k + 1) * n]
    }

    fn psi<'z>(&self, z: &'z [f64], i: usize, k: usize) -> &'z [f64] {
        let (n, m) = (self.n(), self.m());
        let off = (1 + i) * m * n + (k - 1) * n;
        &z[off..off + n]
    }

    fn mask(&self, m: &[f64]) -> Vec<f64> {
        m[1..=self.n()].to_vec()
    }

    /// `(I/dt + l0 A) u`.
    fn step(&self, u: &[f64]) -> Vec<f64> {
        let dt = self.scenario.grid.dt;
        let mut out = vec![0.0; u.len()];
        self.op.apply_into(1.0, u, &mut out);
        out.iter_mut().zip(u).for_each(|(o, v)| *o += v / dt);
        out
    }

    /// The three residuals on interval `n` (unweighted).
    fn residuals(&self, z: &[f64], n: usize) -> [Vec<f64>; 3] {
        let sc = self.scenario;
        let dt = sc.grid.dt;
        let nn = self.n();
        let m = self.m();
        let od = &sc.masks.od[1..=nn];
        let phi_prev = self.phi(z, n - 1);
        let mut r0 = self.step(phi_prev);
        if n < m {
            let phi_n = self.phi(z, n);
            r0.iter_mut().zip(phi_n).for_each(|(r, v)| *r -= v / dt);
        }
        for i in 0..2 {
            let a = sc.alpha[i];
            if a != 0.0 {
                let ps = self.psi(z, i, n);
                for j in 0..nn {
                    r0[j] -= a * od[j] * ps[j];
                }
            }
        }
        let ri = |i: usize| {
            let mut r = self.step(self.psi(z, i, n));
            if n > 1 {
                let prev = self.psi(z, i, n - 1);
                r.iter_mut().zip(prev).for_each(|(r, v)| *r -= v / dt);
            }
            let mi = &sc.masks.follower(i)[1..=nn];
            for j in 0..nn {
                r[j] += mi[j] * phi_prev[j] / sc.mu[i];
            }
            r
        };
        [r0, ri(0), ri(1)]
    }

    /// `K z`, where `z^T K z = b(z, z)`.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let (nn, m) = (self.n(), self.m());
        let sc = self.scenario;
        let dt = sc.grid.dt;
        // Weighted residuals per interval; index n - 1 for interval n.
        let q: Vec<[Vec<f64>; 3]> = self.exec.map(m, |k| {
            let n = k + 1;
            let mut r = self.residuals(z, n);
            r[0].iter_mut().for_each(|v| *v *= self.w0[n]);
            for ri in r.iter_mut().skip(1) {
                ri.iter_mut().for_each(|v| *v *= self.w0[n - 1]);
            }
            r
        });
        let od = self.mask(&sc.masks.od);
        let o = self.mask(&sc.masks.o);
        let mf = [self.mask(&sc.masks.o1), self.mask(&sc.masks.o2)];
        let scale = dt * sc.grid.h;
        let mut out = vec![0.0; z.len()];
        self.exec.for_each_chunk(&mut out, nn, |c, chunk| {
            let block = c / m;
            let row = c % m;
            if block == 0 {
                // phi^k, k = row, meets r0^{k+1}, r0^k, r_i^{k+1} and the observation.
                let k = row;
                let mut acc = self.step(&q[k][0]);
                if k >= 1 {
                    acc.iter_mut().zip(&q[k - 1][0]).for_each(|(a, v)| *a -= v / dt);
                }
                let phi = self.phi(z, k);
                for j in 0..nn {
                    acc[j] += mf[0][j] * q[k][1][j] / sc.mu[0] + mf[1][j] * q[k][2][j] / sc.mu[1];
                    acc[j] += self.w1[k] * o[j] * phi[j];
                }
                chunk.iter_mut().zip(&acc).for_each(|(c, a)| *c = scale * a);
            } else {
                // psi_i^k, k = row + 1, meets r0^k, r_i^k and r_i^{k+1}.
                let i = block - 1;
                let k = row + 1;
                let mut acc = self.step(&q[k - 1][1 + i]);
                if k < m {
                    acc.iter_mut().zip(&q[k][1 + i]).for_each(|(a, v)| *a -= v / dt);
                }
                let a = sc.alpha[i];
                for j in 0..nn {
                    acc[j] -= a * od[j] * q[k - 1][0][j];
                }
                chunk.iter_mut().zip(&acc).for_each(|(c, a)| *c = scale * a);
            }
        });
        out
    }

    /// Diagonal blocks of `K`, one per unknown row. The block of `phi^k` is
    /// `dt h [w0(t_{k+1}) B^2 + w0(t_k)/dt^2 + w0(t_k) sum_i (1_{O_i}/mu_i)^2 + w1(t_k) 1_O]`
    /// with `B = I/dt + l0 A`; the block of `psi_i^k` is
    /// `dt h [w0(t_k) (alpha_i 1_{O_d})^2 + w0(t_{k-1}) B^2 + w0(t_k)/dt^2]`.
    fn preconditioner(&self) -> Vec<RowBlock> {
        let (nn, m) = (self.n(), self.m());
        let sc = self.scenario;
        let dt = sc.grid.dt;
        let scale = dt * sc.grid.h;
        let od = self.mask(&sc.masks.od);
        let o = self.mask(&sc.masks.o);
        let mf = [self.mask(&sc.masks.o1), self.mask(&sc.masks.o2)];
        let c = self.op.scale;
        let bd: Vec<f64> = (0..nn).map(|j| 1.0 / dt + c * self.op.diag[j]).collect();
        let bo: Vec<f64> = (0..nn.saturating_sub(1)).map(|j| c * self.op.sup[j]).collect();
        // Entries of B^2: diagonal, first and second off-diagonal.
        let b2d: Vec<f64> = (0..nn)
            .map(|j| {
                bd[j] * bd[j]
                    + if j > 0 { bo[j - 1].powi(2) } else { 0.0 }
                    + if j + 1 < nn { bo[j].powi(2) } else { 0.0 }
            })
            .collect();
        let b2e1: Vec<f64> = (0..nn.saturating_sub(1)).map(|j| bo[j] * (bd[j] + bd[j + 1])).collect();
        let b2e2: Vec<f64> = (0..nn.saturating_sub(2)).map(|j| bo[j] * bo[j + 1]).collect();
        let block = |wb: f64, shift: &dyn Fn(usize) -> f64| -> RowBlock {
            let d: Vec<f64> = (0..nn).map(|j| scale * (wb * b2d[j] + shift(j))).collect();
            let e1: Vec<f64> = b2e1.iter().map(|v| scale * wb * v).collect();
            let e2: Vec<f64> = b2e2.iter().map(|v| scale * wb * v).collect();
            RowBlock::new(d, e1, e2)
        };
        let mut out = Vec::with_capacity(3 * m);
        for k in 0..m {
            let w = self.w0[k];
            let w1 = self.w1[k];
            let time = if k >= 1 { w / (dt * dt) } else { 0.0 };
            out.push(block(self.w0[k + 1], &|j| {
                time + w * ((mf[0][j] / sc.mu[0]).powi(2) + (mf[1][j] / sc.mu[1]).powi(2)) + w1 * o[j]
            }));
        }
        for i in 0..2 {
            for k in 1..=m {
                let w = self.w0[k];
                let time = if k < m { w / (dt * dt) } else { 0.0 };
                let a = sc.alpha[i];
                out.push(block(self.w0[k - 1], &|j| w * (a * od[j]).powi(2) + time));
            }
        }
        out
    }

    fn apply_preconditioner(&self, r: &[f64]) -> Vec<f64> {
        let nn = self.n();
        let mut out = r.to_vec();
        self.exec.for_each_chunk(&mut out, nn, |c, chunk| self.precond[c].solve_in_place(chunk));
        out
    }

    /// Unknowns the preconditioner holds at zero because their block
    /// underflows.
    fn frozen(&self) -> Vec<bool> {
        self.precond.iter().flat_map(|b| std::iter::repeat_n(b.is_frozen(), self.n())).collect()
    }

    /// Right-hand side `<S, z> = <y0, phi^0> + sum_n dt (<H^n, phi^{n-1}> + sum_i <H_i^n, psi_i^n>)`
    /// as a vector.
    pub fn rhs(&self, data: &LinearData) -> Vec<f64> {
        let (nn, m) = (self.n(), self.m());
        let g = &self.scenario.grid;
        let mut s = vec![0.0; self.len()];
        for j in 0..nn {
            s[j] += g.h * data.y0[j + 1];
        }
        for n in 1..=m {
            let hr = data.h.row(n);
            for j in 0..nn {
                s[(n - 1) * nn + j] += g.dt * g.h * hr[j + 1];
            }
            for i in 0..2 {
                let hi = data.h_i[i].row(n);
                for j in 0..nn {
                    s[(1 + i) * m * nn + (n - 1) * nn + j] += g.dt * g.h * hi[j + 1];
                }
            }
        }
        s
    }

    /// `b(z, w)` through the matrix-free operator.
    pub fn bilinear(&self, z: &[f64], w: &[f64]) -> f64 {
        self.dot(&self.apply(z), w)
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let nn = self.n().max(1);
        let chunks = a.len().div_ceil(nn);
        let partial = self.exec.map(chunks, |c| {
            let lo = c * nn;
            let hi = (lo + nn).min(a.len());
            a[lo..hi].iter().zip(&b[lo..hi]).map(|(x, y)| x * y).sum::<f64>()
        });
        partial.iter().sum()
    }

    /// Preconditioned CG from `start` (zero when `None`).
    pub fn solve(&self, data: &LinearData, start: Option<&[f64]>) -> Result<(Vec<f64>, CgStats)> {
        let cfg = self.scenario.config.solver;
        let s = self.rhs(data);
        let frozen = self.frozen();
        let mut z = match start {
            Some(z0) if z0.len() == s.len() => z0.to_vec(),
            _ => vec![0.0; s.len()],
        };
        let mut stats = CgStats { iterations: 0, residual: 0.0, energy: vec![], energy_monotone: true };
        let s_free: Vec<f64> = s.iter().zip(&frozen).map(|(v, f)| if *f { 0.0 } else { *v }).collect();
        let s_norm = self.dot(&s_free, &self.apply_preconditioner(&s_free)).sqrt();
        if s_norm == 0.0 {
            return Ok((vec![0.0; s.len()], stats));
        }
        let kz = self.apply(&z);
        let mut r: Vec<f64> = s.iter().zip(&kz).zip(&frozen).map(|((a, b), f)| if *f { 0.0 } else { a - b }).collect();
        let mut y = self.apply_preconditioner(&r);
        let mut p = y.clone();
        let mut ry = self.dot(&r, &y);
        let energy_of = |z: &[f64], r: &[f64]| -> f64 {
            // b(z,z)/2 - <S,z> = -(<S,z> + <r,z>)/2 with r = S - Kz.
            -0.5 * (self.dot(&s, z) + self.dot(r, z))
        };
        let mut last = energy_of(&z, &r);
        stats.residual = ry.max(0.0).sqrt() / s_norm;
        while stats.residual > cfg.cg_tol {
            if stats.iterations >= cfg.cg_max_iter {
                return Err(Error::Cg {
                    iterations: stats.iterations,
                    residual: stats.residual,
                    history: stats.energy,
                });
            }
            let kp = self.apply(&p);
            let pkp = self.dot(&p, &kp);
            if !(pkp > 0.0) {
                return Err(Error::Cg {
                    iterations: stats.iterations,
                    residual: stats.residual,
                    history: stats.energy,
                });
            }
            let a = ry / pkp;
            z.iter_mut().zip(&p).for_each(|(z, p)| *z += a * p);
            r.iter_mut().zip(&kp).for_each(|(r, k)| *r -= a * k);
            r.iter_mut().zip(&frozen).for_each(|(r, f)| {
                if *f {
                    *r = 0.0
                }
            });
            y = self.apply_preconditioner(&r);
            let ry_new = self.dot(&r, &y);
            let beta = ry_new / ry;
            ry = ry_new;
            p.iter_mut().zip(&y).for_each(|(p, y)| *p = y + beta * *p);
            stats.iterations += 1;
            stats.residual = ry.max(0.0).sqrt() / s_norm;
            let e = energy_of(&z, &r);
            if e > last + 1e-12 * last.abs().max(f64::MIN_POSITIVE) {
                stats.energy_monotone = false;
            }
            last = e;
            stats.energy.push(e);
        }
        Ok((z, stats))
    }

    /// Unpacks an unknown vector into full-grid fields.
    pub fn to_triple(&self, z: &[f64]) -> AdjointTriple {
        let g = &self.scenario.grid;
        let mut phi = SpaceTimeField::zeros(g);
        let mut psi = [SpaceTimeField::zeros(g), SpaceTimeField::zeros(g)];
        let nn = self.n();
        for k in 0..self.m() {
            phi.row_mut(k)[1..=nn].copy_from_slice(self.phi(z, k));
        }
        for (i, f) in psi.iter_mut().enumerate() {
            for k in 1..=self.m() {
                f.row_mut(k)[1..=nn].copy_from_slice(self.psi(z, i, k));
            }
        }
        AdjointTriple { phi, psi }
    }

    /// Packs a triple; rows outside the constraint set are ignored.
    pub fn from_triple(&self, t: &AdjointTriple) -> Vec<f64> {
        let nn = self.n();
        let m = self.m();
        let mut z = vec![0.0; self.len()];
        for k in 0..m {
            z[k * nn..(k + 1) * nn].copy_from_slice(&t.phi.row(k)[1..=nn]);
        }
        for i in 0..2 {
            for k in 1..=m {
                let off = (1 + i) * m * nn + (k - 1) * nn;
                z[off..off + nn].copy_from_slice(&t.psi[i].row(k)[1..=nn]);
            }
        }
        z
    }

    /// `(y, p_1, p_2, h)` from the Lax-Milgram solution:
    /// `y^n = rho_0^{-2}(t_n) r0^n`, `p_i^{n-1} = rho_0^{-2}(t_{n-1}) r_i^n`,
    /// `h^k = -rho_1^{-2}(t_k) phi^k` on the support of `1_O`.
    pub fn reconstruct_fields(
        &self,
        z: &[f64],
        data: &LinearData,
    ) -> (SpaceTimeField, [SpaceTimeField; 2], SpaceTimeField) {
        let g = &self.scenario.grid;
        let nn = self.n();
        let mut y = SpaceTimeField::zeros(g);
        y.set_row(0, &data.y0);
        let mut p = [SpaceTimeField::zeros(g), SpaceTimeField::zeros(g)];
        let mut h = SpaceTimeField::zeros(g);
        let rows = self.exec.map(self.m(), |k| self.residuals(z, k + 1));
        for (k, r) in rows.iter().enumerate() {
            let n = k + 1;
            for j in 0..nn {
                y.row_mut(n)[j + 1] = self.w0[n] * r[0][j];
                p[0].row_mut(n - 1)[j + 1] = self.w0[n - 1] * r[1][j];
                p[1].row_mut(n - 1)[j + 1] = self.w0[n - 1] * r[2][j];
            }
        }
        let o = &self.scenario.masks.o;
        for k in 0..self.m() {
            let phi = self.phi(z, k);
            for j in 0..nn {
                if o[j + 1] > 0.0 {
                    h.row_mut(k)[j + 1] = -self.w1[k] * phi[j];
                }
            }
        }
        (y, p, h)
    }
}

/// Solution of the linear control problem with its checks.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearControlResult {
    pub y: SpaceTimeField,
    pub p: [SpaceTimeField; 2],
    pub h: SpaceTimeField,
    pub kappa0: f64,
    pub kappa1: f64,
    pub weighted: WeightedEstimates,
    pub cg: CgStats,
    /// `||y(T)||_{L^2}`.
    pub final_norm: f64,
    /// `||y - y_resolved||_{L^2(Q)}` with the re-solved linear system.
    pub transposition_gap: f64,
    /// `5 (h^2 + dt)` times the size of the re-solved state.
    pub transposition_bound: f64,
    pub checks: Vec<Check>,
    /// Lax-Milgram unknown, reusable as a CG starting point.
    pub unknown: Vec<f64>,
}

/// Linear coupled system with coefficient `l(0)`:
/// `L y + sum_i 1_{O_i} p_i / mu_i - 1_O h = H`, `L* p_i - alpha_i 1_{O_d} y = H_i`.
pub fn solve_linear_system(
    h: &SpaceTimeField,
    data: &LinearData,
    scenario: &Scenario,
) -> Result<(SpaceTimeField, [SpaceTimeField; 2])> {
    let grid = &scenario.grid;
    let cfg = scenario.config.solver;
    let l0 = scenario.l_law.value(0.0);
    let op = assemble_stiffness(&scenario.a_law, grid, 1.0);
    let coeff = vec![l0; grid.m_steps + 1];
    let zero_end = vec![0.0; grid.n_nodes()];
    let mut p = [SpaceTimeField::zeros(grid), SpaceTimeField::zeros(grid)];
    let mut history = Vec::new();
    for _ in 0..cfg.fp_max_iter {
        let mut src = data.h.clone();
        for n in 1..=grid.m_steps {
            let row = src.row_mut(n);
            for j in 1..=grid.n_interior {
                row[j] += scenario.masks.o[j] * h.get(n - 1, j)
                    - scenario.masks.o1[j] * p[0].get(n - 1, j) / scenario.mu[0]
                    - scenario.masks.o2[j] * p[1].get(n - 1, j) / scenario.mu[1];
            }
        }
        let y = solve_forward_linear(&data.y0, &coeff, &src, &op, grid)?;
        let mut fresh = [SpaceTimeField::zeros(grid), SpaceTimeField::zeros(grid)];
        let (mut diff, mut size) = (0.0, 0.0);
        for i in 0..2 {
            let mut s = data.h_i[i].clone();
            s.axpy(scenario.alpha[i], &y.masked(&scenario.masks.od));
            for j in 0..s.cols() {
                s.row_mut(0)[j] = 0.0;
            }
            fresh[i] = solve_backward_linear(&zero_end, &coeff, &s, &op, grid)?;
            let mut d = fresh[i].clone();
            d.axpy(-1.0, &p[i]);
            diff += d.dot_q_left(&d, grid);
            size += fresh[i].dot_q_left(&fresh[i], grid);
        }
        let res = if size > 0.0 { (diff / size).sqrt() } else { diff.sqrt() };
        history.push(res);
        if res <= cfg.fp_tol {
            return Ok((y, fresh));
        }
        if !res.is_finite() {
            break;
        }
        for i in 0..2 {
            let mut next = p[i].scaled(1.0 - cfg.damping);
            next.axpy(cfg.damping, &fresh[i]);
            p[i] = next;
        }
    }
    let residual = history.last().copied().unwrap_or(f64::NAN);
    Err(Error::FixedPoint { iterations: history.len(), residual, history })
}

/// Solves the Lax-Milgram problem and reconstructs the controlled triple.
pub fn solve_linear_control(
    data: &LinearData,
    weights: &WeightSet,
    scenario: &Scenario,
) -> Result<LinearControlResult> {
    let lm = LaxMilgram::new(scenario, weights, Exec::default());
    solve_with(&lm, data, weights, None)
}

/// As [`solve_linear_control`] with a prepared system and an optional CG
/// starting point.
pub fn solve_with(
    lm: &LaxMilgram<'_>,
    data: &LinearData,
    weights: &WeightSet,
    start: Option<&[f64]>,
) -> Result<LinearControlResult> {
    let scenario = lm.scenario;
    let grid = &scenario.grid;
    let (z, cg) = lm.solve(data, start)?;
    let (y, p, h) = lm.reconstruct_fields(&z, data);
    let (y_re, _p_re) = solve_linear_system(&h, data, scenario)?;
    let mut d = y.clone();
    d.axpy(-1.0, &y_re);
    let transposition_gap = d.norm_q(grid);
    let scale = y_re.norm_q(grid).max(inner(&data.y0, &data.y0, grid.h).sqrt());
    let transposition_bound = 5.0 * (grid.h * grid.h + grid.dt) * scale;
    let last = y_re.row(grid.m_steps);
    let final_norm = inner(last, last, grid.h).sqrt();
    let (kappa0, kappa1) = data_norms(data, weights, scenario);
    let weighted = verify_weighted_estimates(&y, &p, &h, kappa0, kappa1, weights, scenario);
    let y0_norm = inner(&data.y0, &data.y0, grid.h).sqrt();
    let null_bound = scenario.config.solver.null_tol * y0_norm.max(f64::MIN_POSITIVE);
    let checks = vec![
        Check::at_most("||y(T)|| <= null_tol ||y0||", final_norm, null_bound),
        Check::at_most("transposition gap <= 5 (h^2 + dt) scale", transposition_gap, transposition_bound),
        Check::holds("CG energy nonincreasing", cg.energy_monotone),
        Check::holds("weighted estimates finite", weighted.all_finite()),
    ];
    Ok(LinearControlResult {
        y,
        p,
        h,
        kappa0,
        kappa1,
        weighted,
        cg,
        final_norm,
        transposition_gap,
        transposition_bound,
        checks,
        unknown: z,
    })
}

/// `sum_n dt rho(t_n)^2 ||f^n||^2` for state-type rows `1..=M`, or over
/// rows `0..M` with `left = true`; `rho^{-2}` is given per time node.
fn weighted_sq(f: &SpaceTimeField, inv2: &dyn Fn(usize) -> ExtReal, left: bool, grid: &Grid) -> ExtReal {
    let rows: Box<dyn Iterator<Item = usize>> =
        if left { Box::new(0..grid.m_steps) } else { Box::new(1..=grid.m_steps) };
    let mut acc = ExtReal::ZERO;
    for n in rows {
        let r = f.row(n);
        let v = inner(r, r, grid.h) * grid.dt;
        if v > 0.0 {
            acc = acc + ExtReal::from_f64(v) / inv2(n);
        }
    }
    acc
}

/// `(kappa_0, kappa_1)`: `||rho_2 H||^2 + sum_i ||rho_2 H_i||^2` plus
/// `||y0||^2` or `||y0||^2_{H_a^1}`. Forward data of interval `n` carry the
/// weight at `t_n`, adjoint data the weight at `t_{n-1}`.
pub fn data_norms(data: &LinearData, weights: &WeightSet, scenario: &Scenario) -> (f64, f64) {
    let grid = &scenario.grid;
    let w = |n: usize| weights.rho2_inv2(n);
    let wl = |n: usize| weights.rho2_inv2(n - 1);
    let mut acc = weighted_sq(&data.h, &w, false, grid);
    for hi in &data.h_i {
        acc = acc + weighted_sq(hi, &wl, false, grid);
    }
    let l2 = inner(&data.y0, &data.y0, grid.h);
    let grad = a_energy(&data.y0, &data.y0, &scenario.a_law, grid);
    ((acc + ExtReal::from_f64(l2)).to_f64(), (acc + ExtReal::from_f64(l2 + grad)).to_f64())
}

/// Left sides of the three weighted estimates and their ratios to the data
/// norms (`0/0` reported as 0).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedEstimates {
    /// `int rho_0^2 (|y|^2 + |p_1|^2 + |p_2|^2) + int_O rho_1^2 |h|^2`.
    pub states_and_control: f64,
    /// `sup rho_hat^2 ||.||^2 + int rho_hat^2 a |d_x .|^2`.
    pub energy: f64,
    /// `sup rho_1^2 ||sqrt(a) d_x .||^2 + int rho_1^2 (|d_t .|^2 + |(a d_x .)_x|^2)`.
    pub regularity: f64,
    pub ratio0: f64,
    pub ratio1: f64,
    pub ratio2: f64,
}

impl WeightedEstimates {
    pub fn all_finite(&self) -> bool {
        [self.states_and_control, self.energy, self.regularity, self.ratio0, self.ratio1, self.ratio2]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        0.0
    } else {
        a / b
    }
}

pub fn verify_weighted_estimates(
    y: &SpaceTimeField,
    p: &[SpaceTimeField; 2],
    h: &SpaceTimeField,
    kappa0: f64,
    kappa1: f64,
    weights: &WeightSet,
    scenario: &Scenario,
) -> WeightedEstimates {
    let grid = &scenario.grid;
    let op = assemble_stiffness(&scenario.a_law, grid, 1.0);
    let law = &scenario.a_law;
    let r0 = |n: usize| weights.rho0_inv2(n);
    let r1 = |n: usize| weights.rho1_inv2(n);
    let rh = |n: usize| weights.rho_hat[n].powi(-2);
    let hm = h.masked(&scenario.masks.o);
    let mut first = weighted_sq(y, &r0, false, grid) + weighted_sq(&hm, &r1, true, grid);
    for pi in p {
        first = first + weighted_sq(pi, &r0, true, grid);
    }
    // State-type field on rows 1..=M and the two adjoint fields on rows 0..M.
    let fields: [(&SpaceTimeField, bool); 3] = [(y, false), (&p[0], true), (&p[1], true)];
    let mut sup_hat = ExtReal::ZERO;
    let mut int_hat = ExtReal::ZERO;
    let mut sup_one = ExtReal::ZERO;
    let mut int_one = ExtReal::ZERO;
    for (f, left) in fields {
        let rows: Vec<usize> = if left { (0..grid.m_steps).collect() } else { (1..=grid.m_steps).collect() };
        for &n in &rows {
            let r = f.row(n);
            let l2 = inner(r, r, grid.h);
            let grad = a_energy(r, r, law, grid);
            if l2 > 0.0 {
                sup_hat = sup_hat.max(ExtReal::from_f64(l2) / rh(n));
            }
            if grad > 0.0 {
                int_hat = int_hat + ExtReal::from_f64(grid.dt * grad) / rh(n);
                sup_one = sup_one.max(ExtReal::from_f64(grad) / r1(n));
            }
            let prev = if left { f.row(n + 1) } else { f.row(n - 1) };
            let dtu: f64 = grid.h * r.iter().zip(prev).map(|(a, b)| ((a - b) / grid.dt).powi(2)).sum::<f64>();
            let au = op.apply(&r[1..r.len() - 1]);
            let au2: f64 = grid.h * au.iter().map(|v| v * v).sum::<f64>();
            let v = grid.dt * (dtu + au2);
            if v > 0.0 {
                int_one = int_one + ExtReal::from_f64(v) / r1(n);
            }
        }
    }
    let states_and_control = first.to_f64();
    let energy = (sup_hat + int_hat).to_f64();
    let regularity = (sup_one + int_one).to_f64();
    WeightedEstimates {
        states_and_control,
        energy,
        regularity,
        ratio0: ratio(states_and_control, kappa0),
        ratio1: ratio(energy, kappa1),
        ratio2: ratio(regularity, kappa1),
    }
}

/// Factorized symmetric pentadiagonal block (banded Cholesky), with a
/// diagonal fallback when the factorization loses positivity.
#[derive(Debug, Clone)]
enum RowBlock {
    Cholesky { l0: Vec<f64>, l1: Vec<f64>, l2: Vec<f64> },
    Diagonal(Vec<f64>),
    Frozen,
}

impl RowBlock {
    fn new(d: Vec<f64>, e1: Vec<f64>, e2: Vec<f64>) -> RowBlock {
        let n = d.len();
        let top = d.iter().fold(0.0f64, |a, b| a.max(*b));
        if !(top > 0.0) || !(1.0 / top).is_finite() {
            return RowBlock::Frozen;
        }
        let mut l0 = vec![0.0; n];
        let mut l1 = vec![0.0; n];
        let mut l2 = vec![0.0; n];
        let mut ok = true;
        for j in 0..n {
            if j >= 2 {
                l2[j] = e2[j - 2] / l0[j - 2];
            }
            if j >= 1 {
                let cross = if j >= 2 { l2[j] * l1[j - 1] } else { 0.0 };
                l1[j] = (e1[j - 1] - cross) / l0[j - 1];
            }
            let piv = d[j] - l1[j] * l1[j] - l2[j] * l2[j];
            if !(piv > 1e-14 * d[j]) || !piv.is_finite() || !(1.0 / piv).is_finite() {
                ok = false;
                break;
            }
            l0[j] = piv.sqrt();
        }
        if ok {
            return RowBlock::Cholesky { l0, l1, l2 };
        }
        RowBlock::Diagonal(d.iter().map(|&v| if v > 0.0 && (1.0 / v).is_finite() { 1.0 / v } else { 0.0 }).collect())
    }

    fn is_frozen(&self) -> bool {
        matches!(self, RowBlock::Frozen)
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        match self {
            RowBlock::Frozen => b.iter_mut().for_each(|v| *v = 0.0),
            RowBlock::Diagonal(inv) => b.iter_mut().zip(inv).for_each(|(v, w)| *v *= w),
            RowBlock::Cholesky { l0, l1, l2 } => {
                let n = b.len();
                for j in 0..n {
                    let mut v = b[j];
                    if j >= 1 {
                        v -= l1[j] * b[j - 1];
                    }
                    if j >= 2 {
                        v -= l2[j] * b[j - 2];
                    }
                    b[j] = v / l0[j];
                }
                for j in (0..n).rev() {
                    let mut v = b[j];
                    if j + 1 < n {
                        v -= l1[j + 1] * b[j + 1];
                    }
                    if j + 2 < n {
                        v -= l2[j + 2] * b[j + 2];
                    }
                    b[j] = v / l0[j];
                }
            }
        }
    }
}
