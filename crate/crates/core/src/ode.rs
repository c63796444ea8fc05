//! Deterministic integration on the shared grid.
//!
//! Fixed-step classical Runge-Kutta (RK4) is the carrier for every matrix- and
//! vector-valued ODE in the crate: Riccati sweeps, adjoint offsets, mean
//! fields, transition operators and covariance propagation. Backward solves
//! start from the terminal node and step with a negative increment, so the
//! returned trajectory is always indexed by grid node.

use nalgebra::{DMatrix, Dim, OMatrix};

use crate::error::{Error, Result};
use crate::grid::{MatrixTrajectory, TimeGrid};
use crate::linalg::{min_symmetric_eigenvalue, symmetrize};
use crate::scalar::Scalar;

/// Integration direction on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Initial condition at node 0, sweeping towards the horizon.
    Forward,
    /// Terminal condition at the last node, sweeping towards 0.
    Backward,
}

/// State that RK4 can advance: cloneable with an in-place `self += a * x`.
pub trait OdeState<T: Scalar>: Clone {
    fn axpy_state(&mut self, alpha: T, x: &Self);
    fn is_finite_state(&self) -> bool;
}

impl<T, R, C> OdeState<T> for OMatrix<T, R, C>
where
    T: Scalar,
    R: Dim,
    C: Dim,
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<R, C>,
{
    fn axpy_state(&mut self, alpha: T, x: &Self) {
        self.zip_apply(x, |s, xv| *s += alpha * xv);
    }

    fn is_finite_state(&self) -> bool {
        self.iter().all(|v| v.is_finite_scalar())
    }
}

/// One RK4 step of size `h` from `(t, y)`.
pub fn rk4_step<T, S, F>(rhs: &mut F, t: T, y: &S, h: T) -> S
where
    T: Scalar,
    S: OdeState<T>,
    F: FnMut(T, &S) -> S,
{
    let half = T::lit(0.5);
    let sixth = T::lit(1.0 / 6.0);
    let third = T::lit(1.0 / 3.0);

    let k1 = rhs(t, y);
    let mut y2 = y.clone();
    y2.axpy_state(h * half, &k1);
    let k2 = rhs(t + h * half, &y2);
    let mut y3 = y.clone();
    y3.axpy_state(h * half, &k2);
    let k3 = rhs(t + h * half, &y3);
    let mut y4 = y.clone();
    y4.axpy_state(h, &k3);
    let k4 = rhs(t + h, &y4);

    let mut out = y.clone();
    out.axpy_state(h * sixth, &k1);
    out.axpy_state(h * third, &k2);
    out.axpy_state(h * third, &k3);
    out.axpy_state(h * sixth, &k4);
    out
}

/// Integrates `dy/dt = rhs(t, y)` across the whole grid.
///
/// Forward: `y0` is the value at node 0. Backward: `y0` is the terminal value
/// at node `n_steps` and the sweep steps with `-h`. The result holds one state
/// per node; a non-finite state aborts with the first offending node.
pub fn integrate_ode<T, S, F>(
    mut rhs: F,
    y0: S,
    grid: &TimeGrid<T>,
    direction: Direction,
) -> Result<Vec<S>>
where
    T: Scalar,
    S: OdeState<T>,
    F: FnMut(T, &S) -> S,
{
    let n = grid.n_steps();
    let h = grid.h();
    let mut out: Vec<Option<S>> = vec![None; n + 1];
    match direction {
        Direction::Forward => {
            if !y0.is_finite_state() {
                return Err(Error::IntegrationDiverged { node: 0 });
            }
            out[0] = Some(y0);
            for k in 0..n {
                let y = out[k].as_ref().unwrap();
                let next = rk4_step(&mut rhs, grid.time(k), y, h);
                if !next.is_finite_state() {
                    return Err(Error::IntegrationDiverged { node: k + 1 });
                }
                out[k + 1] = Some(next);
            }
        }
        Direction::Backward => {
            if !y0.is_finite_state() {
                return Err(Error::IntegrationDiverged { node: n });
            }
            out[n] = Some(y0);
            for k in (1..=n).rev() {
                let y = out[k].as_ref().unwrap();
                let prev = rk4_step(&mut rhs, grid.time(k), y, -h);
                if !prev.is_finite_state() {
                    return Err(Error::IntegrationDiverged { node: k - 1 });
                }
                out[k - 1] = Some(prev);
            }
        }
    }
    Ok(out.into_iter().map(|s| s.unwrap()).collect())
}

/// State-transition matrix `Phi(t, s)` of the generator `A(.)` between the
/// grid nodes `s` and `t` (either order), with `Phi(s, s) = I` exact.
pub fn transition_matrix<T: Scalar>(
    a: &MatrixTrajectory<T>,
    s: usize,
    t: usize,
) -> Result<DMatrix<T>> {
    let n = a.rows();
    debug_assert_eq!(n, a.cols());
    let grid = *a.grid();
    if s == t {
        return Ok(DMatrix::identity(n, n));
    }
    let h = grid.h();
    let mut rhs = |tau: T, phi: &DMatrix<T>| a.sample(tau) * phi;
    let mut phi = DMatrix::identity(n, n);
    if t > s {
        for k in s..t {
            phi = rk4_step(&mut rhs, grid.time(k), &phi, h);
            if !phi.is_finite_state() {
                return Err(Error::IntegrationDiverged { node: k + 1 });
            }
        }
    } else {
        for k in (t..s).rev() {
            phi = rk4_step(&mut rhs, grid.time(k + 1), &phi, -h);
            if !phi.is_finite_state() {
                return Err(Error::IntegrationDiverged { node: k });
            }
        }
    }
    Ok(phi)
}

/// Propagates the second-moment (Lyapunov) equation
/// `dP/dt = A_cl P + P A_cl' + G_cl G_cl'` forward from `P(0) = p0`.
///
/// `p0` must be symmetric positive semidefinite (minimum eigenvalue above
/// `-1e-10`); the solution is re-symmetrized after every step.
pub fn propagate_covariance<T: Scalar>(
    a_cl: &MatrixTrajectory<T>,
    g_cl: &MatrixTrajectory<T>,
    p0: &DMatrix<T>,
    grid: &TimeGrid<T>,
) -> Result<MatrixTrajectory<T>> {
    let n = a_cl.rows();
    if p0.nrows() != n || p0.ncols() != n {
        return Err(Error::DimensionMismatch {
            field: "P0".into(),
            expected: format!("{n}x{n}"),
            found: format!("{}x{}", p0.nrows(), p0.ncols()),
        });
    }
    let min = min_symmetric_eigenvalue(p0);
    if min < -T::lit(1e-10) {
        return Err(Error::InvalidCovariance {
            eigenvalue: min.as_f64(),
        });
    }

    let mut rhs = |t: T, p: &DMatrix<T>| {
        let a = a_cl.sample(t);
        let g = g_cl.sample(t);
        let mut dp = &a * p;
        dp.gemm(T::one(), p, &a.transpose(), T::one());
        dp.gemm(T::one(), &g, &g.transpose(), T::one());
        dp
    };

    let h = grid.h();
    let mut values = Vec::with_capacity(grid.n_nodes());
    let mut p = p0.clone();
    symmetrize(&mut p);
    values.push(p.clone());
    for k in 0..grid.n_steps() {
        p = rk4_step(&mut rhs, grid.time(k), &p, h);
        symmetrize(&mut p);
        if !p.is_finite_state() {
            return Err(Error::IntegrationDiverged { node: k + 1 });
        }
        values.push(p.clone());
    }
    MatrixTrajectory::from_nodes(*grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VectorTrajectory;
    use nalgebra::{dmatrix, DVector};

    fn grid(t: f64, n: usize) -> TimeGrid<f64> {
        TimeGrid::new(t, n).unwrap()
    }

    #[test]
    fn zero_field_stays_constant() {
        let g = grid(1.0, 10);
        let y0 = DVector::from_vec(vec![3.0, -1.0]);
        let out = integrate_ode(|_, _| DVector::zeros(2), y0.clone(), &g, Direction::Forward)
            .unwrap();
        for v in &out {
            assert_eq!(v, &y0);
        }
    }

    #[test]
    fn exponential_forward_matches_analytic() {
        let g = grid(1.0, 1000);
        let out = integrate_ode(
            |_, y: &DVector<f64>| y.clone(),
            DVector::from_element(1, 1.0),
            &g,
            Direction::Forward,
        )
        .unwrap();
        assert!((out[1000][0] - std::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn exponential_backward_matches_analytic() {
        let g = grid(1.0, 1000);
        let out = integrate_ode(
            |_, y: &DVector<f64>| -y.clone(),
            DVector::from_element(1, 1.0),
            &g,
            Direction::Backward,
        )
        .unwrap();
        assert!((out[0][0] - std::f64::consts::E).abs() < 1e-9);
        assert_eq!(out[1000][0], 1.0);
    }

    #[test]
    fn rk4_is_fourth_order() {
        // Halving h must shrink the exponential error by at least 12x.
        let err = |n: usize| {
            let g = grid(1.0, n);
            let out = integrate_ode(
                |_, y: &DVector<f64>| y.clone(),
                DVector::from_element(1, 1.0),
                &g,
                Direction::Forward,
            )
            .unwrap();
            (out[n][0] - std::f64::consts::E).abs()
        };
        let coarse = err(20);
        let fine = err(40);
        assert!(coarse / fine >= 12.0, "order ratio {}", coarse / fine);
    }

    #[test]
    fn divergence_names_first_bad_node() {
        let g = grid(1.0, 100);
        // Finite-escape: dy/dt = y^2 with y(0)=200 blows past f64 range.
        let res = integrate_ode(
            |_, y: &DVector<f64>| y.component_mul(y),
            DVector::from_element(1, 200.0),
            &g,
            Direction::Forward,
        );
        match res {
            Err(Error::IntegrationDiverged { node }) => assert!(node > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn transition_of_zero_generator_is_identity() {
        let g = grid(1.0, 8);
        let a = MatrixTrajectory::constant(g, DMatrix::zeros(3, 3)).unwrap();
        for (s, t) in [(0, 0), (0, 8), (5, 2)] {
            let phi = transition_matrix(&a, s, t).unwrap();
            assert!((phi - DMatrix::<f64>::identity(3, 3)).abs().max() == 0.0);
        }
    }

    #[test]
    fn scalar_transition_is_exponential() {
        let g = grid(2.0, 400);
        let a = MatrixTrajectory::constant(g, DMatrix::from_element(1, 1, 0.7)).unwrap();
        // Both orders of (s, t).
        let phi = transition_matrix(&a, 100, 300).unwrap();
        let expected = (0.7f64 * (g.time(300) - g.time(100))).exp();
        assert!((phi[(0, 0)] - expected).abs() < 1e-9);
        let phi_back = transition_matrix(&a, 300, 100).unwrap();
        let expected_back = (0.7f64 * (g.time(100) - g.time(300))).exp();
        assert!((phi_back[(0, 0)] - expected_back).abs() < 1e-9);
    }

    #[test]
    fn transition_semigroup_property() {
        // Random-ish time-varying 3x3 generator, checked via direct products.
        let g = grid(1.0, 128);
        let nodes: Vec<DMatrix<f64>> = (0..g.n_nodes())
            .map(|k| {
                let t = g.time(k);
                dmatrix![
                    0.3 * (1.0 + t), -0.5, 0.1 * t;
                    0.2, -0.4 * t, 0.25;
                    -0.15, 0.05, 0.2 - 0.3 * t
                ]
            })
            .collect();
        let a = MatrixTrajectory::from_nodes(g, nodes).unwrap();
        let (r, s, t) = (16usize, 64usize, 112usize);
        let lhs = transition_matrix(&a, s, t).unwrap() * transition_matrix(&a, r, s).unwrap();
        let rhs = transition_matrix(&a, r, t).unwrap();
        assert!((lhs - rhs).abs().max() < 1e-8);
    }

    #[test]
    fn static_system_keeps_covariance() {
        let g = grid(1.0, 16);
        let a = MatrixTrajectory::constant(g, DMatrix::zeros(2, 2)).unwrap();
        let gm = MatrixTrajectory::constant(g, DMatrix::zeros(2, 1)).unwrap();
        let p0 = dmatrix![2.0, 0.5; 0.5, 1.0];
        let p = propagate_covariance(&a, &gm, &p0, &g).unwrap();
        for k in 0..=16 {
            assert!((p.node(k) - &p0).abs().max() < 1e-14);
        }
    }

    #[test]
    fn brownian_variance_grows_linearly() {
        let g = grid(1.0, 200);
        let a = MatrixTrajectory::constant(g, DMatrix::zeros(1, 1)).unwrap();
        let gm = MatrixTrajectory::constant(g, DMatrix::from_element(1, 1, 1.0)).unwrap();
        let p = propagate_covariance(&a, &gm, &DMatrix::zeros(1, 1), &g).unwrap();
        for k in 0..=200 {
            assert!((p.node(k)[(0, 0)] - g.time(k)).abs() < 1e-9);
        }
    }

    #[test]
    fn stationary_ou_covariance_is_flat() {
        let g = grid(1.0, 200);
        let a = MatrixTrajectory::constant(g, DMatrix::from_element(1, 1, -1.0)).unwrap();
        let gm =
            MatrixTrajectory::constant(g, DMatrix::from_element(1, 1, 2.0f64.sqrt())).unwrap();
        let p0 = DMatrix::from_element(1, 1, 1.0);
        let p = propagate_covariance(&a, &gm, &p0, &g).unwrap();
        for k in 0..=200 {
            assert!((p.node(k)[(0, 0)] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn covariance_rejects_indefinite_start() {
        let g = grid(1.0, 8);
        let a = MatrixTrajectory::constant(g, DMatrix::zeros(2, 2)).unwrap();
        let gm = MatrixTrajectory::constant(g, DMatrix::zeros(2, 2)).unwrap();
        let p0 = dmatrix![1.0, 0.0; 0.0, -1e-6];
        match propagate_covariance(&a, &gm, &p0, &g) {
            Err(Error::InvalidCovariance { .. }) => {}
            other => panic!("expected invalid covariance, got {other:?}"),
        }
    }

    #[test]
    fn vector_trajectory_feeds_time_varying_rhs() {
        // dy/dt = c(t) with c sampled from a trajectory: integral of t is t^2/2.
        let g = grid(1.0, 256);
        let c = VectorTrajectory::from_nodes(
            g,
            (0..g.n_nodes())
                .map(|k| DVector::from_element(1, g.time(k)))
                .collect(),
        )
        .unwrap();
        let out = integrate_ode(
            |t, _y: &DVector<f64>| c.sample(t),
            DVector::zeros(1),
            &g,
            Direction::Forward,
        )
        .unwrap();
        assert!((out[256][0] - 0.5).abs() < 1e-10);
    }
}
