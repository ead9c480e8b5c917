//! Spatial quadratures, discrete norms and region masks.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::Grid;
use crate::laws::DiffusionLaw;

const ENDPOINT_TOL: f64 = 1e-12;

/// Open subinterval `(lo, hi)` of `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Self { lo: v[0], hi: v[1] }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_valid_subinterval(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && 0.0 <= self.lo && self.lo < self.hi && self.hi <= 1.0
    }

    /// Nodal indicator: one inside, one half on an end point, zero outside.
    /// The half weight makes the nodal sum the trapezoid rule of the
    /// restricted integral whenever the end points are grid nodes.
    pub fn indicator(&self, x: f64) -> f64 {
        if (x - self.lo).abs() <= ENDPOINT_TOL || (x - self.hi).abs() <= ENDPOINT_TOL {
            0.5
        } else if x > self.lo && x < self.hi {
            1.0
        } else {
            0.0
        }
    }

    /// Indicator sampled on every node; boundary nodes are always zero.
    pub fn mask(&self, grid: &Grid) -> Vec<f64> {
        let mut m: Vec<f64> = grid.nodes().iter().map(|&x| self.indicator(x)).collect();
        m[0] = 0.0;
        m[grid.n_interior + 1] = 0.0;
        m
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo.max(other.lo) < self.hi.min(other.hi)
    }

    /// `self` is compactly contained in `other`.
    pub fn is_compactly_inside(&self, other: &Interval) -> bool {
        other.lo < self.lo && self.hi < other.hi
    }
}

/// Composite trapezoid value of `int_0^1 u dx`.
pub fn l1_integral(u: &[f64], grid: &Grid) -> Result<f64> {
    grid.check_len(u.len())?;
    Ok(trapezoid_sum(u) / (grid.n_interior + 1) as f64)
}

/// Trapezoid sum without the factor `h`.
pub(crate) fn trapezoid_sum(u: &[f64]) -> f64 {
    let n = u.len();
    let inner: f64 = u[1..n - 1].iter().sum();
    inner + 0.5 * (u[0] + u[n - 1])
}

/// Trapezoid value of `int_0^1 u v dx`.
pub fn inner(u: &[f64], v: &[f64], h: f64) -> f64 {
    let n = u.len();
    let inner: f64 = (1..n - 1).map(|j| u[j] * v[j]).sum();
    h * (inner + 0.5 * (u[0] * v[0] + u[n - 1] * v[n - 1]))
}

/// Discrete `L^2`, `H^1_a` seminorm and `H^1_a` norm of a spatial array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    pub l2: f64,
    pub h1a_seminorm: f64,
    pub h1a_norm: f64,
}

pub fn weighted_norms(u: &[f64], law: &DiffusionLaw, grid: &Grid) -> Result<Norms> {
    grid.check_len(u.len())?;
    let l2sq = inner(u, u, grid.h);
    let semisq = a_energy(u, u, law, grid);
    Ok(Norms { l2: l2sq.sqrt(), h1a_seminorm: semisq.sqrt(), h1a_norm: (l2sq + semisq).sqrt() })
}

/// `sum_j a_{j+1/2} (u_{j+1}-u_j)(v_{j+1}-v_j) / h`, the discrete `int a u_x v_x`.
pub fn a_energy(u: &[f64], v: &[f64], law: &DiffusionLaw, grid: &Grid) -> f64 {
    (0..=grid.n_interior).map(|j| law.a(grid.half_node(j)) * (u[j + 1] - u[j]) * (v[j + 1] - v[j])).sum::<f64>()
        / grid.h
}
