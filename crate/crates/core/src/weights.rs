//! Carleman weights: the spatial profile `Psi`, the time cap `m(t)` and the
//! time-only weight family `rho_0, rho_1, rho_2, rho_hat`.
//!
//! `tau = 1/m` blows up at `t = T`, and for any useful `s` the weights leave
//! the `f64` range within a few time steps, so every weight is stored as an
//! [`ExtReal`]. Values at `t = T` are the exact limits (zero inverse weights).

use serde::Serialize;

use crate::checks::Check;
use crate::error::{Error, Result};
use crate::extreal::ExtReal;
use crate::grid::Grid;
use crate::laws::DiffusionLaw;
use crate::quadrature::Interval;
use crate::scenario::Scenario;

/// Spatial Carleman profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiFunction {
    pub alpha_prime: f64,
    pub beta_prime: f64,
    law: DiffusionLaw,
    /// Hermite data at `alpha'` and `beta'`: value, first and second derivative.
    left: [f64; 3],
    right: [f64; 3],
    pub psi: Vec<f64>,
    pub dpsi: Vec<f64>,
    pub d2psi: Vec<f64>,
    pub psi_inf: f64,
    pub psi_max: f64,
    pub psi_min: f64,
}

pub fn build_psi(
    law: &DiffusionLaw,
    alpha_prime: f64,
    beta_prime: f64,
    o: &Interval,
    grid: &Grid,
) -> Result<PsiFunction> {
    if !(0.0 < alpha_prime && alpha_prime < beta_prime && beta_prime < 1.0) {
        return Err(Error::Weights("need 0 < alpha' < beta' < 1".into()));
    }
    if !Interval::new(alpha_prime, beta_prime).is_compactly_inside(o) {
        return Err(Error::Weights("(alpha', beta') must be compactly inside O".into()));
    }
    let g = law.gamma();
    let left = [law.int_s_over_a(0.0, alpha_prime), alpha_prime.powf(1.0 - g), (1.0 - g) * alpha_prime.powf(-g)];
    let right = [0.0, -beta_prime.powf(1.0 - g), -(1.0 - g) * beta_prime.powf(-g)];
    let mut f = PsiFunction {
        alpha_prime,
        beta_prime,
        law: *law,
        left,
        right,
        psi: vec![],
        dpsi: vec![],
        d2psi: vec![],
        psi_inf: 0.0,
        psi_max: f64::NEG_INFINITY,
        psi_min: f64::INFINITY,
    };
    for &x in grid.nodes() {
        let [v, d1, d2] = f.eval(x);
        f.psi.push(v);
        f.dpsi.push(d1);
        f.d2psi.push(d2);
    }
    let dense = 8000;
    let probe = (0..=dense).map(|k| k as f64 / dense as f64).chain(grid.nodes().iter().copied());
    for x in probe {
        let v = f.eval(x)[0];
        f.psi_max = f.psi_max.max(v);
        f.psi_min = f.psi_min.min(v);
    }
    f.psi_inf = f.psi_max.abs().max(f.psi_min.abs());
    Ok(f)
}

impl PsiFunction {
    /// `[Psi, Psi', Psi'']` at `x`; `Psi''(0)` is infinite when `gamma > 0`.
    pub fn eval(&self, x: f64) -> [f64; 3] {
        let g = self.law.gamma();
        if x < self.alpha_prime {
            let d2 = if x == 0.0 && g > 0.0 { f64::INFINITY } else { (1.0 - g) * x.powf(-g) };
            [self.law.int_s_over_a(0.0, x), x.powf(1.0 - g), d2]
        } else if x >= self.beta_prime {
            [-self.law.int_s_over_a(self.beta_prime, x), -x.powf(1.0 - g), -(1.0 - g) * x.powf(-g)]
        } else {
            self.blend(x)
        }
    }

    /// Quintic Hermite interpolation of the end data on `[alpha', beta']`.
    fn blend(&self, x: f64) -> [f64; 3] {
        let l = self.beta_prime - self.alpha_prime;
        let u = (x - self.alpha_prime) / l;
        let (u2, u3, u4, u5) = (u * u, u * u * u, u.powi(4), u.powi(5));
        // Basis functions and their first two derivatives in u.
        let h = [
            [
                1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5,
                -30.0 * u2 + 60.0 * u3 - 30.0 * u4,
                -60.0 * u + 180.0 * u2 - 120.0 * u3,
            ],
            [
                u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5,
                1.0 - 18.0 * u2 + 32.0 * u3 - 15.0 * u4,
                -36.0 * u + 96.0 * u2 - 60.0 * u3,
            ],
            [
                0.5 * (u2 - 3.0 * u3 + 3.0 * u4 - u5),
                0.5 * (2.0 * u - 9.0 * u2 + 12.0 * u3 - 5.0 * u4),
                0.5 * (2.0 - 18.0 * u + 36.0 * u2 - 20.0 * u3),
            ],
            [10.0 * u3 - 15.0 * u4 + 6.0 * u5, 30.0 * u2 - 60.0 * u3 + 30.0 * u4, 60.0 * u - 180.0 * u2 + 120.0 * u3],
            [-4.0 * u3 + 7.0 * u4 - 3.0 * u5, -12.0 * u2 + 28.0 * u3 - 15.0 * u4, -24.0 * u + 84.0 * u2 - 60.0 * u3],
            [
                0.5 * (u3 - 2.0 * u4 + u5),
                0.5 * (3.0 * u2 - 8.0 * u3 + 5.0 * u4),
                0.5 * (6.0 * u - 24.0 * u2 + 20.0 * u3),
            ],
        ];
        let coef = [
            self.left[0],
            l * self.left[1],
            l * l * self.left[2],
            self.right[0],
            l * self.right[1],
            l * l * self.right[2],
        ];
        let mut out = [0.0; 3];
        for (c, b) in coef.iter().zip(&h) {
            out[0] += c * b[0];
            out[1] += c * b[1];
            out[2] += c * b[2];
        }
        out[1] /= l;
        out[2] /= l * l;
        out
    }

    /// Largest one-sided mismatch of value, slope and curvature at the two
    /// junctions.
    pub fn junction_mismatch(&self) -> f64 {
        let b0 = self.blend(self.alpha_prime);
        let b1 = self.blend(self.beta_prime);
        (0..3).map(|k| (b0[k] - self.left[k]).abs().max((b1[k] - self.right[k]).abs())).fold(0.0, f64::max)
    }
}

/// Time cap `m(t)`: equal to `t^4 (T-t)^4` on `[T/2, T]` and blended to the
/// value `m0` at `t = 0` by a quintic smoothstep.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeCap {
    pub t_final: f64,
    pub m0: f64,
    pub m: Vec<f64>,
    pub dm: Vec<f64>,
}

pub fn build_time_cap(t_final: f64, m0: f64, grid: &Grid) -> Result<TimeCap> {
    if !(m0 >= (t_final / 2.0).powi(4) * t_final.powi(4)) {
        return Err(Error::Weights(format!("m0 = {m0:e} is below (T/2)^4 T^4")));
    }
    let mut cap = TimeCap { t_final, m0, m: vec![], dm: vec![] };
    for &t in grid.times() {
        cap.m.push(cap.value(t));
        cap.dm.push(cap.derivative(t));
    }
    for (&t, &m) in grid.times().iter().zip(&cap.m) {
        if t > 0.0 && t <= t_final / 2.0 && m < tail(t, t_final) {
            return Err(Error::Weights(format!("time cap fails to dominate at t = {t}")));
        }
    }
    Ok(cap)
}

fn tail(t: f64, tf: f64) -> f64 {
    (t * (tf - t)).powi(4)
}

fn tail_derivative(t: f64, tf: f64) -> f64 {
    4.0 * (t * (tf - t)).powi(3) * (tf - 2.0 * t)
}

impl TimeCap {
    fn blend(&self, t: f64) -> (f64, f64) {
        let half = self.t_final / 2.0;
        if t >= half {
            return (0.0, 0.0);
        }
        let u = t / half;
        let b = 1.0 - u.powi(3) * (10.0 - 15.0 * u + 6.0 * u * u);
        let db = -30.0 * u * u * (1.0 - u) * (1.0 - u) / half;
        (b, db)
    }

    pub fn value(&self, t: f64) -> f64 {
        let q = tail(t, self.t_final);
        let (b, _) = self.blend(t);
        if b == 0.0 {
            q
        } else {
            self.m0 * b + q * (1.0 - b)
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let q = tail(t, self.t_final);
        let dq = tail_derivative(t, self.t_final);
        let (b, db) = self.blend(t);
        self.m0 * db + dq * (1.0 - b) - q * db
    }

    /// Jump of one-sided difference quotients of `m` at `T/2`, relative to
    /// the largest sampled `|m'|`.
    pub fn c1_jump(&self) -> f64 {
        let half = self.t_final / 2.0;
        let eps = 1e-6 * self.t_final;
        let right = (self.value(half + eps) - self.value(half)) / eps;
        let left = (self.value(half) - self.value(half - eps)) / eps;
        let scale = self.dm.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        (right - left).abs() / scale
    }
}

/// Time-sampled weight family, one entry per time node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSet {
    pub s: f64,
    pub lambda: f64,
    pub psi_inf: f64,
    pub nu_bar: f64,
    pub nu_min: f64,
    pub zeta0: f64,
    /// Comparison constant `M = s * nu_bar / 2`.
    pub big_m: f64,
    pub times: Vec<f64>,
    pub tau: Vec<f64>,
    pub a_star: Vec<f64>,
    pub a_hat: Vec<f64>,
    pub zeta_star: Vec<f64>,
    pub zeta_hat: Vec<f64>,
    pub rho0: Vec<ExtReal>,
    pub rho1: Vec<ExtReal>,
    pub rho2: Vec<ExtReal>,
    pub rho_hat: Vec<ExtReal>,
}

/// `(nu_max, nu_min)` of `nu(x) = e^{lambda(P+Psi)} - e^{3 lambda P}`.
fn nu_extrema(psi: &PsiFunction, lambda: f64) -> (f64, f64) {
    let p = psi.psi_inf;
    let top = (3.0 * lambda * p).exp();
    ((lambda * (p + psi.psi_max)).exp() - top, (lambda * (p + psi.psi_min)).exp() - top)
}

fn lambda_admissible(psi: &PsiFunction, lambda: f64) -> bool {
    let (hi, lo) = nu_extrema(psi, lambda);
    3.0 * hi < 2.0 * lo && lo < 0.0 && hi.is_finite()
}

/// Smallest power of two, starting from one, satisfying `3 nu_max < 2 nu_min`.
pub fn find_lambda(psi: &PsiFunction) -> Result<f64> {
    let mut lambda = 1.0;
    for _ in 0..40 {
        if lambda_admissible(psi, lambda) {
            return Ok(lambda);
        }
        lambda *= 2.0;
    }
    Err(Error::Weights("3A* < 2Â unreachable within the lambda budget".into()))
}

/// Default `s`: the value making `s |A*(T/2)| = 8`.
///
/// `d/dtau ln rho_1 = s |nu_bar| - 4 / tau`, so `rho_0` and `rho_1` grow on
/// `[T/2, T)` exactly when `s |A*(T/2)| >= 4`; the default keeps a factor two
/// above that while keeping the weights within a moderate range on `[0, T/2]`.
pub fn default_s(psi: &PsiFunction, lambda: f64, t_final: f64) -> f64 {
    let (nu_bar, _) = nu_extrema(psi, lambda);
    let tau_half = 1.0 / (t_final / 2.0).powi(8);
    8.0 / (nu_bar.abs() * tau_half)
}

pub fn build_weights(
    psi: &PsiFunction,
    cap: &TimeCap,
    s: Option<f64>,
    lambda: Option<f64>,
    grid: &Grid,
) -> Result<WeightSet> {
    let lambda = match lambda {
        Some(l) if lambda_admissible(psi, l) => l,
        Some(l) => return Err(Error::Weights(format!("lambda = {l} violates 3A* < 2Â"))),
        None => find_lambda(psi)?,
    };
    let s = s.unwrap_or_else(|| default_s(psi, lambda, cap.t_final));
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Weights("s must be positive".into()));
    }
    let (nu_bar, nu_min) = nu_extrema(psi, lambda);
    let p = psi.psi_inf;
    let e_star = (lambda * (p + psi.psi_max)).exp();
    let e_hat = (lambda * (p + psi.psi_min)).exp();
    let mut w = WeightSet {
        s,
        lambda,
        psi_inf: p,
        nu_bar,
        nu_min,
        zeta0: (lambda * (psi.psi_max - psi.psi_min)).exp(),
        big_m: s * nu_bar / 2.0,
        times: grid.times().to_vec(),
        tau: vec![],
        a_star: vec![],
        a_hat: vec![],
        zeta_star: vec![],
        zeta_hat: vec![],
        rho0: vec![],
        rho1: vec![],
        rho2: vec![],
        rho_hat: vec![],
    };
    for &m in &cap.m {
        let tau = if m > 0.0 { 1.0 / m } else { f64::INFINITY };
        let a_star = tau * nu_bar;
        let a_hat = tau * nu_min;
        let zs = tau * e_star;
        let zh = tau * e_hat;
        let e = ExtReal::exp(-s * a_star);
        let zs_x = ExtReal::from_f64(zs);
        w.tau.push(tau);
        w.a_star.push(a_star);
        w.a_hat.push(a_hat);
        w.zeta_star.push(zs);
        w.zeta_hat.push(zh);
        if tau.is_finite() {
            w.rho0.push(e / zs_x.powi(2));
            w.rho1.push(e / zs_x.powi(4));
            w.rho2.push(ExtReal::exp(-1.5 * s * a_star) / ExtReal::from_f64(zh));
            w.rho_hat.push(e / zs_x.powi(3));
        } else {
            for v in [&mut w.rho0, &mut w.rho1, &mut w.rho2, &mut w.rho_hat] {
                v.push(ExtReal::INFINITY);
            }
        }
    }
    Ok(w)
}

/// Weights for a scenario from its resolved Carleman configuration.
pub fn weights_for(scenario: &Scenario) -> Result<(PsiFunction, TimeCap, WeightSet)> {
    let c = scenario.config.carleman;
    let grid = &scenario.grid;
    let psi = build_psi(
        &scenario.a_law,
        c.alpha_prime.expect("resolved"),
        c.beta_prime.expect("resolved"),
        &scenario.config.regions.o,
        grid,
    )?;
    let cap = build_time_cap(grid.t_final, c.m0.expect("resolved"), grid)?;
    let ws = build_weights(&psi, &cap, c.s, c.lambda, grid)?;
    Ok((psi, cap, ws))
}

/// Outcome of the weight invariant checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightReport {
    pub checks: Vec<Check>,
    /// Constant of the ordering `rho_1 <= C rho_hat <= C rho_0 <= C rho_2`.
    pub ordering_constant: f64,
    pub identity_max_rel_error: f64,
    pub zeta_ratio_max_rel_error: f64,
}

impl WeightSet {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Indices of nodes in `(0, T)`.
    fn open_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&n| self.tau[n].is_finite())
    }

    pub fn rho0_inv2(&self, n: usize) -> ExtReal {
        self.rho0[n].powi(-2)
    }

    pub fn rho1_inv2(&self, n: usize) -> ExtReal {
        self.rho1[n].powi(-2)
    }

    pub fn rho2_inv2(&self, n: usize) -> ExtReal {
        self.rho2[n].powi(-2)
    }

    pub fn check_invariants(&self) -> WeightReport {
        let mut checks = Vec::new();
        let open: Vec<usize> = self.open_nodes().collect();
        checks
            .push(Check::holds("A* < 0 and Â < 0", open.iter().all(|&n| self.a_star[n] < 0.0 && self.a_hat[n] < 0.0)));
        checks.push(Check::holds(
            "3A* < 2Â < 0",
            open.iter().all(|&n| 3.0 * self.a_star[n] < 2.0 * self.a_hat[n] && self.a_hat[n] < 0.0),
        ));
        let zeta_err =
            open.iter().map(|&n| (self.zeta_star[n] / self.zeta_hat[n] / self.zeta0 - 1.0).abs()).fold(0.0, f64::max);
        checks.push(Check::at_most("zeta*/zeta_hat constant", zeta_err, 1e-12));
        let id_err = open
            .iter()
            .map(|&n| {
                let lhs = self.rho_hat[n] * self.rho_hat[n];
                let rhs = self.rho1[n] * self.rho0[n];
                ((lhs / rhs).to_f64() - 1.0).abs()
            })
            .fold(0.0, f64::max);
        checks.push(Check::at_most("rho_hat^2 = rho1*rho0", id_err, 1e-13));
        let mut c_order = ExtReal::ONE;
        for &n in &open {
            c_order = c_order
                .max(self.rho1[n] / self.rho_hat[n])
                .max(self.rho_hat[n] / self.rho0[n])
                .max(self.rho0[n] / self.rho2[n]);
        }
        let ordering_constant = c_order.to_f64();
        checks.push(Check::holds("rho1 <= C rho_hat <= C rho0 <= C rho2 with finite C", c_order.is_finite()));
        let last = self.len() - 1;
        let vanish =
            [Self::rho0_inv2 as fn(&Self, usize) -> ExtReal, Self::rho1_inv2, Self::rho2_inv2].iter().all(|f| {
                let peak = (0..self.len()).map(|n| f(self, n)).fold(ExtReal::ZERO, ExtReal::max);
                f(self, last) <= peak * ExtReal::from_f64(1e-30)
            });
        checks.push(Check::holds("inverse weights vanish at T", vanish));
        let half = self.times[last] / 2.0;
        let tail: Vec<usize> = open.iter().copied().filter(|&n| self.times[n] >= half).collect();
        let increasing =
            tail.windows(2).all(|w| self.rho0[w[1]] > self.rho0[w[0]] && self.rho1[w[1]] > self.rho1[w[0]]);
        checks.push(Check::holds("rho0, rho1 increasing on [T/2, T)", increasing));
        WeightReport { checks, ordering_constant, identity_max_rel_error: id_err, zeta_ratio_max_rel_error: zeta_err }
    }

    /// Normalized inverse weights `(rho_0^{-2}, rho_1^{-2}) / S` as `f64`,
    /// with `S` the largest sampled `rho_0^{-2}`. The common factor `S` only
    /// rescales the Lax-Milgram unknown and leaves the reconstruction intact.
    pub fn normalized_inverse_weights(&self) -> (Vec<f64>, Vec<f64>, ExtReal) {
        let peak = (1..self.len()).map(|n| self.rho0_inv2(n)).fold(ExtReal::ZERO, ExtReal::max);
        let peak = if peak.is_zero() { ExtReal::ONE } else { peak };
        let w0 = (0..self.len()).map(|n| (self.rho0_inv2(n) / peak).to_f64()).collect();
        let w1 = (0..self.len()).map(|n| (self.rho1_inv2(n) / peak).to_f64()).collect();
        (w0, w1, peak)
    }
}

/// Constants of the two weight comparisons behind the weighted product
/// estimates: `e^{-2M tau} <= C rho_1^2` and `zeta*^6 <= C e^{-2M tau}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub constant: f64,
    pub log10_constant: f64,
    pub first_ratio_max: f64,
    pub second_ratio_max: f64,
    pub worst_time: f64,
    pub tail_ratio: f64,
    pub passed: bool,
}

pub fn check_comparison_bound(ws: &WeightSet) -> ComparisonReport {
    let mut c = ExtReal::ONE;
    let mut r1max = ExtReal::ZERO;
    let mut r2max = ExtReal::ZERO;
    let mut worst = 0.0;
    let mut tail_ratio = 0.0;
    for n in ws.open_nodes() {
        let e = ExtReal::exp(-2.0 * ws.big_m * ws.tau[n]);
        let r1 = e / (ws.rho1[n] * ws.rho1[n]);
        let r2 = ExtReal::from_f64(ws.zeta_star[n]).powi(6) / e;
        if r1.max(r2) > c {
            c = r1.max(r2);
            worst = ws.times[n];
        }
        r1max = r1max.max(r1);
        r2max = r2max.max(r2);
        tail_ratio = r1.max(r2).to_f64();
    }
    ComparisonReport {
        constant: c.to_f64(),
        log10_constant: c.log10(),
        first_ratio_max: r1max.to_f64(),
        second_ratio_max: r2max.to_f64(),
        worst_time: worst,
        tail_ratio,
        passed: c.is_finite() && c.log10().is_finite(),
    }
}
