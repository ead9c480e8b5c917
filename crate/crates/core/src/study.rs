//! Manufactured-solution convergence study for the degenerate solver.
//!
//! The exact solution is `y = x(1 - x) e^{-t}` with `a = x^gamma`, so the
//! source `f = y_t - (a y_x)_x` is available in closed form. The source
//! enters through its control-volume averages, which stay bounded next to
//! the degenerate end where `f` itself behaves like `x^(gamma - 1)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::{Grid, SpaceTimeField};
use crate::laws::DiffusionLaw;
use crate::operator::assemble_stiffness;
use crate::solvers::solve_forward_linear;

pub fn manufactured_exact(x: f64, t: f64) -> f64 {
    x * (1.0 - x) * (-t).exp()
}

pub fn manufactured_source(gamma: f64, x: f64, t: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let flux_x = gamma * x.powf(gamma - 1.0) * (1.0 - 2.0 * x) - 2.0 * x.powf(gamma);
    (-x * (1.0 - x) - flux_x) * (-t).exp()
}

/// Average of the source over the control volume `(lo, hi)`:
/// `int f = -[x^2/2 - x^3/3] e^{-t} - [x^gamma (1 - 2x)] e^{-t}`.
pub fn manufactured_cell_source(gamma: f64, lo: f64, hi: f64, t: f64) -> f64 {
    let prim = |x: f64| -(x * x / 2.0 - x * x * x / 3.0) - x.powf(gamma) * (1.0 - 2.0 * x);
    (prim(hi) - prim(lo)) * (-t).exp() / (hi - lo)
}

/// How the grids are nested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum StudyMode {
    /// `h` and `dt` halved together.
    Combined,
    /// Only `h` is halved; every level uses `m_steps` time steps and the
    /// time-discrete manufactured solution.
    SpatialOnly { m_steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n_interior: usize,
    pub m_steps: usize,
    pub h: f64,
    pub dt: f64,
    pub error_max: f64,
    pub error_l2: f64,
    /// `log2` of the previous level's `error_max` over this one.
    pub order_max: Option<f64>,
    pub order_l2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub gamma: f64,
    pub t_final: f64,
    pub mode: StudyMode,
    pub rows: Vec<ConvergenceRow>,
    /// Both error measures decrease from every level to the next.
    pub monotone: bool,
    pub min_order_max: f64,
    pub min_order_l2: f64,
}

/// Errors of one manufactured run: maximum over all nodes and times, and the
/// `L^2(Q)` norm.
///
/// With `discrete_time` the factor `e^{-t_n}` is replaced by `(1 + dt)^{-n}`,
/// which backward Euler reproduces exactly, so only the spatial error remains.
pub fn manufactured_errors(gamma: f64, grid: &Grid, discrete_time: bool) -> Result<(f64, f64)> {
    let law = DiffusionLaw::power(gamma);
    let op = assemble_stiffness(&law, grid, 1.0);
    // `e^{-t'}` evaluates the time factor in both variants.
    let warp = |t: f64| if discrete_time { (t / grid.dt).round() * grid.dt.ln_1p() } else { t };
    let exact = SpaceTimeField::from_fn(grid, |t, x| manufactured_exact(x, warp(t)));
    let half = grid.h / 2.0;
    let source = SpaceTimeField::from_fn(grid, |t, x| manufactured_cell_source(gamma, x - half, x + half, warp(t)));
    let coeff = vec![1.0; grid.m_steps + 1];
    let y = solve_forward_linear(exact.row(0), &coeff, &source, &op, grid)?;
    let mut d = y;
    d.axpy(-1.0, &exact);
    Ok((d.max_abs(), d.norm_q(grid)))
}

/// Runs `levels` nested grids starting from `(n_interior, m_steps)`. Level
/// `k` has `(n_interior + 1) 2^k - 1` interior nodes.
pub fn convergence_study(
    gamma: f64,
    t_final: f64,
    n_interior: usize,
    m_steps: usize,
    levels: usize,
    mode: StudyMode,
    exec: Exec,
) -> Result<ConvergenceTable> {
    if levels < 3 {
        return Err(Error::InvalidScenario(vec!["levels >= 3".into()]));
    }
    let grids: Vec<Grid> = (0..levels)
        .map(|k| {
            let n = (n_interior + 1) * (1 << k) - 1;
            let m = match mode {
                StudyMode::Combined => m_steps << k,
                StudyMode::SpatialOnly { m_steps } => m_steps,
            };
            Grid::new(t_final, n, m)
        })
        .collect::<Result<_>>()?;
    let discrete_time = matches!(mode, StudyMode::SpatialOnly { .. });
    let errors = exec.map(grids.len(), |k| manufactured_errors(gamma, &grids[k], discrete_time));
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels);
    for (grid, e) in grids.iter().zip(errors) {
        let (error_max, error_l2) = e?;
        let (order_max, order_l2) = match rows.last() {
            Some(p) => (Some((p.error_max / error_max).log2()), Some((p.error_l2 / error_l2).log2())),
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            n_interior: grid.n_interior,
            m_steps: grid.m_steps,
            h: grid.h,
            dt: grid.dt,
            error_max,
            error_l2,
            order_max,
            order_l2,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].error_max < w[0].error_max && w[1].error_l2 < w[0].error_l2);
    let min_of = |f: fn(&ConvergenceRow) -> Option<f64>| rows.iter().filter_map(f).fold(f64::INFINITY, f64::min);
    Ok(ConvergenceTable {
        gamma,
        t_final,
        mode,
        monotone,
        min_order_max: min_of(|r| r.order_max),
        min_order_l2: min_of(|r| r.order_l2),
        rows,
    })
}
