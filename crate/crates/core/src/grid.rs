//! Shared time grid and node-sampled trajectories.
//!
//! Every ODE and SDE in this crate is integrated on one uniform grid over
//! `[0, T]`, so coupled quantities (Riccati kernels, mean fields, filters,
//! sample paths) line up node for node. Time-varying coefficients are stored
//! as node samples and interpolated linearly at integrator midpoints.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform discretization of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T: Scalar> {
    horizon: T,
    n_steps: usize,
}

impl<T: Scalar> TimeGrid<T> {
    /// A grid with `n_steps` uniform steps on `[0, horizon]`.
    pub fn new(horizon: T, n_steps: usize) -> Result<Self> {
        if horizon <= T::zero() || !horizon.is_finite_scalar() {
            return Err(Error::Config {
                what: format!("horizon must be positive and finite, got {}", horizon.as_f64()),
            });
        }
        if n_steps < 2 {
            return Err(Error::Config {
                what: format!("n_steps must be at least 2, got {n_steps}"),
            });
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn t0(&self) -> T {
        T::zero()
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    /// Step size `h = T / n_steps`.
    pub fn h(&self) -> T {
        self.horizon / T::from_count(self.n_steps)
    }

    /// Time of node `k`.
    pub fn time(&self, k: usize) -> T {
        debug_assert!(k <= self.n_steps);
        self.horizon * T::from_count(k) / T::from_count(self.n_steps)
    }

    /// Grid with every step split `factor` times (same horizon).
    pub fn refine(&self, factor: usize) -> Self {
        debug_assert!(factor >= 1);
        Self {
            horizon: self.horizon,
            n_steps: self.n_steps * factor,
        }
    }
}

fn check_len<T: Scalar>(grid: &TimeGrid<T>, len: usize) -> Result<()> {
    if len != grid.n_nodes() {
        return Err(Error::DimensionMismatch {
            field: "trajectory".into(),
            expected: format!("{} nodes", grid.n_nodes()),
            found: format!("{len}"),
        });
    }
    Ok(())
}

/// Node-sampled matrix-valued function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTrajectory<T: Scalar> {
    grid: TimeGrid<T>,
    values: Vec<DMatrix<T>>,
    rows: usize,
    cols: usize,
}

impl<T: Scalar> MatrixTrajectory<T> {
    /// Broadcasts a constant matrix across the grid.
    pub fn constant(grid: TimeGrid<T>, value: DMatrix<T>) -> Result<Self> {
        Self::from_nodes(grid, vec![value; grid.n_nodes()])
    }

    /// Wraps one matrix per node; all must share dimensions and be finite.
    pub fn from_nodes(grid: TimeGrid<T>, values: Vec<DMatrix<T>>) -> Result<Self> {
        check_len(&grid, values.len())?;
        let (rows, cols) = (values[0].nrows(), values[0].ncols());
        for (k, v) in values.iter().enumerate() {
            if v.nrows() != rows || v.ncols() != cols {
                return Err(Error::DimensionMismatch {
                    field: format!("trajectory node {k}"),
                    expected: format!("{rows}x{cols}"),
                    found: format!("{}x{}", v.nrows(), v.ncols()),
                });
            }
            if !v.iter().all(|x| x.is_finite_scalar()) {
                return Err(Error::IntegrationDiverged { node: k });
            }
        }
        Ok(Self { grid, values, rows, cols })
    }

    pub fn zeros(grid: TimeGrid<T>, rows: usize, cols: usize) -> Self {
        Self {
            grid,
            values: vec![DMatrix::zeros(rows, cols); grid.n_nodes()],
            rows,
            cols,
        }
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn node(&self, k: usize) -> &DMatrix<T> {
        &self.values[k]
    }

    pub fn node_mut(&mut self, k: usize) -> &mut DMatrix<T> {
        &mut self.values[k]
    }

    pub fn nodes(&self) -> &[DMatrix<T>] {
        &self.values
    }

    /// Value midway between nodes `k` and `k + 1` (linear interpolation).
    pub fn midpoint(&self, k: usize) -> DMatrix<T> {
        let half = T::lit(0.5);
        let mut m = self.values[k].clone();
        m.zip_apply(&self.values[k + 1], |s, o| *s = (*s + o) * half);
        m
    }

    /// Cubic (4-point) interpolation at the midpoint of interval `k`.
    ///
    /// Keeps chained RK4 sweeps at full order when this trajectory is itself
    /// the output of an earlier solve. Falls back to linear on grids too
    /// short for the stencil.
    pub fn midpoint4(&self, k: usize) -> DMatrix<T> {
        match midpoint4_stencil(self.values.len(), k) {
            None => self.midpoint(k),
            Some((i0, w)) => {
                let mut m = DMatrix::zeros(self.rows, self.cols);
                for (j, wj) in w.iter().enumerate() {
                    m.zip_apply(&self.values[i0 + j], |s, o| *s += T::lit(*wj) * o);
                }
                m
            }
        }
    }

    /// Linear interpolation at an arbitrary time in `[0, T]`; exact at nodes.
    pub fn sample(&self, t: T) -> DMatrix<T> {
        let (k, frac) = locate(&self.grid, t);
        if frac == T::zero() {
            return self.values[k].clone();
        }
        let w = T::one() - frac;
        let mut m = self.values[k].clone();
        m.zip_apply(&self.values[k + 1], |s, o| *s = *s * w + o * frac);
        m
    }

    /// Node or cubic-midpoint lookup for integrator stage times; linear
    /// elsewhere. Used when this trajectory is a solved quantity feeding a
    /// later RK4 sweep.
    pub fn eval4(&self, t: T) -> DMatrix<T> {
        let (k, frac) = locate(&self.grid, t);
        if frac == T::zero() {
            return self.values[k].clone();
        }
        if (frac - T::lit(0.5)).abs() < T::lit(1e-6) {
            return self.midpoint4(k);
        }
        self.sample(t)
    }

    /// Largest absolute entry difference across all nodes.
    pub fn max_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs().max())
            .fold(T::zero(), |acc, d| acc.max(d))
    }

    /// Largest absolute entry across all nodes.
    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .map(|a| a.abs().max())
            .fold(T::zero(), |acc, d| acc.max(d))
    }
}

/// Node-sampled vector-valued function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTrajectory<T: Scalar> {
    grid: TimeGrid<T>,
    values: Vec<DVector<T>>,
    dim: usize,
}

impl<T: Scalar> VectorTrajectory<T> {
    pub fn constant(grid: TimeGrid<T>, value: DVector<T>) -> Result<Self> {
        Self::from_nodes(grid, vec![value; grid.n_nodes()])
    }

    pub fn from_nodes(grid: TimeGrid<T>, values: Vec<DVector<T>>) -> Result<Self> {
        check_len(&grid, values.len())?;
        let dim = values[0].len();
        for (k, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    field: format!("trajectory node {k}"),
                    expected: format!("{dim}"),
                    found: format!("{}", v.len()),
                });
            }
            if !v.iter().all(|x| x.is_finite_scalar()) {
                return Err(Error::IntegrationDiverged { node: k });
            }
        }
        Ok(Self { grid, values, dim })
    }

    pub fn zeros(grid: TimeGrid<T>, dim: usize) -> Self {
        Self {
            grid,
            values: vec![DVector::zeros(dim); grid.n_nodes()],
            dim,
        }
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, k: usize) -> &DVector<T> {
        &self.values[k]
    }

    pub fn node_mut(&mut self, k: usize) -> &mut DVector<T> {
        &mut self.values[k]
    }

    pub fn nodes(&self) -> &[DVector<T>] {
        &self.values
    }

    pub fn midpoint(&self, k: usize) -> DVector<T> {
        let half = T::lit(0.5);
        let mut v = self.values[k].clone();
        v.axpy(half, &self.values[k + 1], half);
        v
    }

    /// Cubic (4-point) interpolation at the midpoint of interval `k`; see
    /// [`MatrixTrajectory::midpoint4`].
    pub fn midpoint4(&self, k: usize) -> DVector<T> {
        match midpoint4_stencil(self.values.len(), k) {
            None => self.midpoint(k),
            Some((i0, w)) => {
                let mut v = DVector::zeros(self.dim);
                for (j, wj) in w.iter().enumerate() {
                    v.axpy(T::lit(*wj), &self.values[i0 + j], T::one());
                }
                v
            }
        }
    }

    pub fn sample(&self, t: T) -> DVector<T> {
        let (k, frac) = locate(&self.grid, t);
        if frac == T::zero() {
            return self.values[k].clone();
        }
        let mut v = self.values[k].clone();
        v.axpy(frac, &self.values[k + 1], T::one() - frac);
        v
    }

    /// Node or cubic-midpoint lookup for integrator stage times; see
    /// [`MatrixTrajectory::eval4`].
    pub fn eval4(&self, t: T) -> DVector<T> {
        let (k, frac) = locate(&self.grid, t);
        if frac == T::zero() {
            return self.values[k].clone();
        }
        if (frac - T::lit(0.5)).abs() < T::lit(1e-6) {
            return self.midpoint4(k);
        }
        self.sample(t)
    }

    pub fn max_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs().max())
            .fold(T::zero(), |acc, d| acc.max(d))
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .map(|a| a.abs().max())
            .fold(T::zero(), |acc, d| acc.max(d))
    }
}

/// Four-point Lagrange weights for the midpoint of interval `k` on a grid of
/// `len` nodes, with one-sided stencils at both ends. `None` when the grid is
/// too short for a cubic stencil.
fn midpoint4_stencil(len: usize, k: usize) -> Option<(usize, [f64; 4])> {
    if len < 4 {
        return None;
    }
    debug_assert!(k + 1 < len);
    if k == 0 {
        Some((0, [0.3125, 0.9375, -0.3125, 0.0625]))
    } else if k + 2 >= len {
        Some((len - 4, [0.0625, -0.3125, 0.9375, 0.3125]))
    } else {
        Some((k - 1, [-0.0625, 0.5625, 0.5625, -0.0625]))
    }
}

/// Bracketing node and interpolation weight for time `t`, clamped to the grid.
/// Snaps to the nearest node when within a relative `1e-9` of it, so node and
/// midpoint queries are exact.
fn locate<T: Scalar>(grid: &TimeGrid<T>, t: T) -> (usize, T) {
    let pos = (t / grid.h()).max(T::zero());
    let kf = pos.floor();
    let mut k = kf.as_f64() as usize;
    if k >= grid.n_steps() {
        return (grid.n_steps(), T::zero());
    }
    let mut frac = pos - kf;
    let snap = T::lit(1e-9);
    if frac < snap {
        frac = T::zero();
    } else if frac > T::one() - snap {
        k += 1;
        frac = T::zero();
        if k >= grid.n_steps() {
            return (grid.n_steps().min(k), T::zero());
        }
    }
    (k, frac)
}
