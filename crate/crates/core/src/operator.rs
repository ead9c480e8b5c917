//! Finite-volume realization of `A u = -(a u_x)_x` with Dirichlet conditions,
//! tridiagonal solvers and the symmetric eigen-decomposition used by the
//! Galerkin oracle.
//!
//! Vectors handled here hold the `N` interior values only.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::laws::DiffusionLaw;

/// Symmetric tridiagonal stiffness matrix; the row for node `j` is
/// `[-a_{j-1/2}, a_{j-1/2} + a_{j+1/2}, -a_{j+1/2}] / h^2`, times `scale`
/// when applied.
#[derive(Debug, Clone, PartialEq)]
pub struct TriDiagOperator {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub scale: f64,
    pub h: f64,
}

pub fn assemble_stiffness(law: &DiffusionLaw, grid: &Grid, scale: f64) -> TriDiagOperator {
    let n = grid.n_interior;
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let half: Vec<f64> = (0..=n).map(|j| law.a(grid.half_node(j))).collect();
    let mut sub = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut diag = vec![0.0; n];
    for i in 0..n {
        diag[i] = (half[i] + half[i + 1]) * inv_h2;
        if i > 0 {
            sub[i] = -half[i] * inv_h2;
        }
        if i + 1 < n {
            sup[i] = -half[i + 1] * inv_h2;
        }
    }
    TriDiagOperator { sub, diag, sup, scale, h: grid.h }
}

impl TriDiagOperator {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `out = coeff * scale * A u`.
    pub fn apply_into(&self, coeff: f64, u: &[f64], out: &mut [f64]) {
        let n = self.len();
        let c = coeff * self.scale;
        for i in 0..n {
            let mut v = self.diag[i] * u[i];
            if i > 0 {
                v += self.sub[i] * u[i - 1];
            }
            if i + 1 < n {
                v += self.sup[i] * u[i + 1];
            }
            out[i] = c * v;
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.apply_into(1.0, u, &mut out);
        out
    }

    /// `shift * I + coeff * scale * A` as a general tridiagonal matrix.
    pub fn shifted(&self, shift: f64, coeff: f64) -> Tridiagonal {
        let c = coeff * self.scale;
        Tridiagonal {
            lower: self.sub.iter().map(|v| c * v).collect(),
            diag: self.diag.iter().map(|v| shift + c * v).collect(),
            upper: self.sup.iter().map(|v| c * v).collect(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (1..self.len()).all(|j| self.sub[j] == self.sup[j - 1])
    }

    pub fn is_diagonally_dominant(&self) -> bool {
        (0..self.len()).all(|j| self.diag[j] >= 0.0 && self.diag[j] >= self.sub[j].abs() + self.sup[j].abs())
    }
}

/// General tridiagonal matrix; `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn identity(n: usize) -> Self {
        Self { lower: vec![0.0; n], diag: vec![1.0; n], upper: vec![0.0; n] }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.upper[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// Thomas algorithm. Fails when a pivot is negligible against its row.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.diag.len();
        if rhs.len() != n {
            return Err(Error::Shape { expected: n, got: rhs.len() });
        }
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut prev_c = 0.0;
        let mut prev_x = 0.0;
        for i in 0..n {
            let l = if i > 0 { self.lower[i] } else { 0.0 };
            let pivot = self.diag[i] - l * prev_c;
            let size = self.diag[i].abs() + (l * prev_c).abs();
            if !pivot.is_finite() || pivot.abs() <= 1e-14 * size || pivot == 0.0 {
                return Err(Error::ZeroPivot { row: i });
            }
            let u = if i + 1 < n { self.upper[i] } else { 0.0 };
            prev_c = u / pivot;
            prev_x = (rhs[i] - l * prev_x) / pivot;
            c[i] = prev_c;
            x[i] = prev_x;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        Ok(x)
    }

    /// Solves `(T + u w^T) x = rhs` by the Sherman-Morrison formula.
    pub fn solve_rank_one(&self, u: &[f64], w: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let x = self.solve(rhs)?;
        if u.iter().all(|&v| v == 0.0) || w.iter().all(|&v| v == 0.0) {
            return Ok(x);
        }
        let z = self.solve(u)?;
        let wz: f64 = w.iter().zip(&z).map(|(a, b)| a * b).sum();
        let wx: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        let den = 1.0 + wz;
        if den.abs() < 1e-12 {
            return Err(Error::SingularCorrection(den));
        }
        let f = wx / den;
        Ok(x.iter().zip(&z).map(|(a, b)| a - f * b).collect())
    }
}

/// Leading eigenpairs of `A`, with modes orthonormal in the discrete `L^2`
/// product `h * sum u_j v_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub k: usize,
    pub lambdas: Vec<f64>,
    /// Interior values of each mode.
    pub modes: Vec<Vec<f64>>,
}

pub fn eigen_decompose(op: &TriDiagOperator, k: usize) -> Result<EigenBasis> {
    let n = op.len();
    if k == 0 || k > n {
        return Err(Error::Shape { expected: n, got: k });
    }
    let d: Vec<f64> = op.diag.iter().map(|v| v * op.scale).collect();
    let e: Vec<f64> = op.sup.iter().map(|v| v * op.scale).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let mut lambdas = Vec::with_capacity(k);
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(k);
    for idx in 0..k {
        let lambda = bisect_eigenvalue(&d, &e, idx, lo, hi);
        let mut w = inverse_iteration(&d, &e, lambda, idx).ok_or(Error::Eigen { mode: idx })?;
        for prev in &modes {
            let proj: f64 = op.h * prev.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            w.iter_mut().zip(prev).for_each(|(a, b)| *a -= proj * b);
        }
        let norm = (op.h * w.iter().map(|v| v * v).sum::<f64>()).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Eigen { mode: idx });
        }
        let pivot = w.iter().copied().find(|v| v.abs() > 1e-8).unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        w.iter_mut().for_each(|v| *v *= sign / norm);
        lambdas.push(lambda);
        modes.push(w);
    }
    Ok(EigenBasis { k, lambdas, modes })
}

/// Number of eigenvalues strictly below `x` (Sturm sequence count).
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let off = if i > 0 { e[i - 1] * e[i - 1] } else { 0.0 };
        q = d[i] - x - if i > 0 { off / q } else { 0.0 };
        if q == 0.0 {
            q = -f64::EPSILON * (d[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn bisect_eigenvalue(d: &[f64], e: &[f64], idx: usize, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b || (b - a) <= 2.0 * f64::EPSILON * a.abs().max(b.abs()) {
            break;
        }
        if sturm_count(d, e, mid) > idx {
            b = mid;
        } else {
            a = mid;
        }
    }
    0.5 * (a + b)
}

fn inverse_iteration(d: &[f64], e: &[f64], lambda: f64, idx: usize) -> Option<Vec<f64>> {
    let n = d.len();
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut w: Vec<f64> = (0..n).map(|i| 1.0 + ((i * (idx + 3)) % 7) as f64 * 0.1).collect();
    for _ in 0..4 {
        // Thomas on (T - lambda I) with tiny pivots replaced.
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut pc = 0.0;
        let mut px = 0.0;
        for i in 0..n {
            let l = if i > 0 { e[i - 1] } else { 0.0 };
            let mut pivot = d[i] - lambda - l * pc;
            if pivot.abs() < f64::EPSILON * scale {
                pivot = f64::EPSILON * scale;
            }
            let u = if i + 1 < n { e[i] } else { 0.0 };
            pc = u / pivot;
            px = (w[i] - l * px) / pivot;
            c[i] = pc;
            x[i] = px;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return None;
        }
        w = x.iter().map(|v| v / norm).collect();
    }
    Some(w)
}
