//! Ready-made example problems.
//!
//! These are the instances used by the test suite, the bundled CLI configs
//! and the documentation. All are `f64`.

use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use crate::grid::TimeGrid;
use crate::problem::{DmPartition, LqfProblem};
use crate::rng::SeqStream;

/// Scalar single-DM problem `A=0, B=1, G=0, H=1, R=1, M_T=0` on `[0, 2]`
/// with deterministic start `x(0) = 1`: the Riccati kernel is
/// `K(t) = tanh(T - t)` and the optimal cost is `K(0)/2`.
pub fn scalar_tanh(n_steps: usize) -> LqfProblem<f64> {
    let grid = TimeGrid::new(2.0, n_steps).unwrap();
    LqfProblem::from_constant(
        grid,
        dmatrix![0.0],
        dmatrix![1.0],
        dmatrix![0.0],
        dmatrix![1.0],
        dmatrix![1.0],
        dmatrix![0.0],
        dvector![1.0],
        dmatrix![0.0],
        DmPartition::new(vec![1], vec![1], vec![1]).unwrap(),
    )
    .unwrap()
}

/// Bundled two-DM example: scalar subsystems coupled through the dynamics,
/// the input map and the pay-off, with moderate noise and a deterministic
/// start. Pay-off coupling satisfies `|R_ii^{-1} R_ij| = 0.4`. The start is
/// deterministic so that scaling the coupling to zero makes both information
/// structures exactly equivalent (each filter then tracks its own subsystem
/// perfectly).
pub fn two_dm_coupled(n_steps: usize) -> LqfProblem<f64> {
    let grid = TimeGrid::new(1.0, n_steps).unwrap();
    LqfProblem::from_constant(
        grid,
        dmatrix![-0.2, 0.3; 0.1, -0.4],
        dmatrix![1.0, 0.2; 0.1, 1.0],
        dmatrix![0.4, 0.0; 0.0, 0.5],
        dmatrix![1.0, 0.2; 0.2, 0.8],
        dmatrix![1.0, 0.4; 0.4, 1.0],
        dmatrix![0.5, 0.1; 0.1, 0.5],
        dvector![1.0, -0.5],
        DMatrix::zeros(2, 2),
        DmPartition::new(vec![1, 1], vec![1, 1], vec![1, 1]).unwrap(),
    )
    .unwrap()
}

/// Fully decoupled two-DM instance with deterministic start: both
/// information structures achieve the same cost on it.
pub fn two_dm_decoupled(n_steps: usize) -> LqfProblem<f64> {
    let grid = TimeGrid::new(1.0, n_steps).unwrap();
    LqfProblem::from_constant(
        grid,
        dmatrix![-0.3, 0.0; 0.0, -0.6],
        dmatrix![1.0, 0.0; 0.0, 1.0],
        dmatrix![0.4, 0.0; 0.0, 0.5],
        dmatrix![1.0, 0.0; 0.0, 0.8],
        dmatrix![1.0, 0.0; 0.0, 1.2],
        dmatrix![0.5, 0.0; 0.0, 0.3],
        dvector![1.0, -0.5],
        dmatrix![0.0, 0.0; 0.0, 0.0],
        DmPartition::new(vec![1, 1], vec![1, 1], vec![1, 1]).unwrap(),
    )
    .unwrap()
}

/// Three scalar subsystems with ring coupling in the dynamics and the
/// pay-off.
pub fn three_dm_ring(n_steps: usize) -> LqfProblem<f64> {
    let grid = TimeGrid::new(1.0, n_steps).unwrap();
    let rho = 0.3;
    LqfProblem::from_constant(
        grid,
        dmatrix![
            -0.5, 0.2, 0.0;
            0.0, -0.6, 0.2;
            0.2, 0.0, -0.7
        ],
        dmatrix![
            1.0, 0.0, 0.1;
            0.1, 1.0, 0.0;
            0.0, 0.1, 1.0
        ],
        DMatrix::identity(3, 3) * 0.3,
        dmatrix![
            1.0, 0.1, 0.0;
            0.1, 0.9, 0.1;
            0.0, 0.1, 0.8
        ],
        dmatrix![
            1.0, rho, 0.0;
            rho, 1.0, rho;
            0.0, rho, 1.0
        ],
        DMatrix::identity(3, 3) * 0.4,
        dvector![1.0, 0.0, -0.5],
        DMatrix::identity(3, 3) * 0.1,
        DmPartition::new(vec![1, 1, 1], vec![1, 1, 1], vec![1, 1, 1]).unwrap(),
    )
    .unwrap()
}

/// Seeded random two-DM instance with per-DM state dimension in `{1, 2}`,
/// bounded pay-off coupling and PSD cost data. Deterministic in `seed`.
pub fn random_coupled(seed: u64, n_steps: usize) -> LqfProblem<f64> {
    fn rand_mat(s: &mut SeqStream, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = scale * s.next_signed_unit();
            }
        }
        m
    }

    let mut s = SeqStream::new(seed);
    let n1 = 1 + (s.next_u64() % 2) as usize;
    let n2 = 1 + (s.next_u64() % 2) as usize;
    let n = n1 + n2;
    let d = 2;
    let grid = TimeGrid::new(1.0, n_steps).unwrap();

    let a = rand_mat(&mut s, n, n, 0.8);
    let mut b = rand_mat(&mut s, n, d, 0.4);
    // keep each DM's own input column dominant
    b[(0, 0)] += 1.0;
    b[(n1, 1)] += 1.0;
    let mut g = DMatrix::zeros(n, 2);
    for i in 0..n {
        let j = if i < n1 { 0 } else { 1 };
        g[(i, j)] = 0.3 + 0.2 * s.next_unit();
    }
    let h_half = rand_mat(&mut s, n, n, 0.6);
    let h = &h_half * h_half.transpose();
    let m_half = rand_mat(&mut s, n, n, 0.4);
    let m_term = &m_half * m_half.transpose();
    // R = I + bounded symmetric cross block
    let rho = 0.4 * s.next_signed_unit();
    let r = dmatrix![1.0, rho; rho, 1.0];
    let mut x0_mean = DVector::zeros(n);
    for i in 0..n {
        x0_mean[i] = s.next_signed_unit();
    }
    let p_half = rand_mat(&mut s, n, n, 0.3);
    let x0_cov = &p_half * p_half.transpose();

    LqfProblem::from_constant(
        grid,
        a,
        b,
        g,
        h,
        r,
        m_term,
        x0_mean,
        x0_cov,
        DmPartition::new(vec![n1, n2], vec![1, 1], vec![1, 1]).unwrap(),
    )
    .unwrap()
}
