//! Tensor space-time grid and fields sampled on it.

use crate::error::{Error, Result};

/// Uniform grid on `[0,1] x [0,T]`.
///
/// Node `x_j = j/(N+1)` for `j = 0..=N+1` and time `t_n = n*T/M` for
/// `n = 0..=M`. The end points are stored exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n_interior: usize,
    pub m_steps: usize,
    pub h: f64,
    pub dt: f64,
    pub t_final: f64,
    nodes: Vec<f64>,
    times: Vec<f64>,
}

impl Grid {
    pub fn new(t_final: f64, n_interior: usize, m_steps: usize) -> Result<Self> {
        let mut problems = Vec::new();
        if n_interior < 3 {
            problems.push("n_interior >= 3".to_string());
        }
        if m_steps < 2 {
            problems.push("m_steps >= 2".to_string());
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            problems.push("T > 0".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::InvalidScenario(problems));
        }
        let cells = (n_interior + 1) as f64;
        let mut nodes: Vec<f64> = (0..=n_interior + 1).map(|j| j as f64 / cells).collect();
        nodes[n_interior + 1] = 1.0;
        let mut times: Vec<f64> = (0..=m_steps).map(|n| t_final * (n as f64 / m_steps as f64)).collect();
        times[m_steps] = t_final;
        Ok(Self { n_interior, m_steps, h: 1.0 / cells, dt: t_final / m_steps as f64, t_final, nodes, times })
    }

    /// Number of spatial nodes including both boundary nodes.
    pub fn n_nodes(&self) -> usize {
        self.n_interior + 2
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Cell midpoint `x_{j+1/2}` for `j = 0..=N`.
    pub fn half_node(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / (self.n_interior + 1) as f64
    }

    /// Grid with twice as many cells in space and twice as many time steps.
    pub fn refined(&self) -> Grid {
        Grid::new(self.t_final, 2 * self.n_interior + 1, 2 * self.m_steps).expect("refinement of a valid grid is valid")
    }

    /// Grid with the same time axis and a different spatial resolution.
    pub fn with_space(&self, n_interior: usize) -> Result<Grid> {
        Grid::new(self.t_final, n_interior, self.m_steps)
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_nodes() {
            return Err(Error::Shape { expected: self.n_nodes(), got: len });
        }
        Ok(())
    }
}

/// Scalar field on the space-time grid, stored row by row (one row per time
/// node, boundary nodes included).
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::zeros_dims(grid.m_steps + 1, grid.n_nodes())
    }

    pub(crate) fn zeros_dims(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: vec![0.0; rows * cols] }
    }

    /// Samples `f(t, x)` at interior nodes; boundary columns stay zero.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for (n, &t) in grid.times().iter().enumerate() {
            let row = out.row_mut(n);
            for j in 1..=grid.n_interior {
                row[j] = f(t, grid.nodes()[j]);
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.cols..(n + 1) * self.cols]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.values[n * self.cols..(n + 1) * self.cols]
    }

    pub fn set_row(&mut self, n: usize, data: &[f64]) {
        self.row_mut(n).copy_from_slice(data);
    }

    pub fn get(&self, n: usize, j: usize) -> f64 {
        self.values[n * self.cols + j]
    }

    pub fn fits(&self, grid: &Grid) -> bool {
        self.rows == grid.m_steps + 1 && self.cols == grid.n_nodes()
    }

    pub(crate) fn check(&self, grid: &Grid) -> Result<()> {
        if !self.fits(grid) {
            return Err(Error::Shape { expected: (grid.m_steps + 1) * grid.n_nodes(), got: self.values.len() });
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &SpaceTimeField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn scaled(&self, c: f64) -> SpaceTimeField {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Multiplies every row by a spatial mask.
    pub fn masked(&self, mask: &[f64]) -> SpaceTimeField {
        let mut out = self.clone();
        for n in 0..self.rows {
            for (v, m) in out.row_mut(n).iter_mut().zip(mask) {
                *v *= m;
            }
        }
        out
    }

    /// Space-time inner product: rectangle rule on rows `1..=M` in time and
    /// the trapezoid rule (zero boundary values) in space.
    pub fn dot_q(&self, other: &SpaceTimeField, grid: &Grid) -> f64 {
        let mut acc = 0.0;
        for n in 1..self.rows {
            let s: f64 = self.row(n).iter().zip(other.row(n)).map(|(a, b)| a * b).sum();
            acc += s;
        }
        acc * grid.h * grid.dt
    }

    pub fn norm_q(&self, grid: &Grid) -> f64 {
        self.dot_q(self, grid).sqrt()
    }

    /// Space-time inner product for adjoint-type and control fields, whose
    /// row `n - 1` belongs to the interval `(t_{n-1}, t_n]`: rectangle rule on
    /// rows `0..M`.
    pub fn dot_q_left(&self, other: &SpaceTimeField, grid: &Grid) -> f64 {
        let mut acc = 0.0;
        for n in 0..self.rows - 1 {
            let s: f64 = self.row(n).iter().zip(other.row(n)).map(|(a, b)| a * b).sum();
            acc += s;
        }
        acc * grid.h * grid.dt
    }

    pub fn norm_q_left(&self, grid: &Grid) -> f64 {
        self.dot_q_left(self, grid).sqrt()
    }

    /// Field obtained by reversing the order of the time rows.
    pub fn time_flipped(&self) -> SpaceTimeField {
        let mut out = self.clone();
        for n in 0..self.rows {
            out.row_mut(n).copy_from_slice(self.row(self.rows - 1 - n));
        }
        out
    }
}
