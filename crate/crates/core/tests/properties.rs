//! Property-based invariants for the numeric kernels.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use teamlq::centralized::solve_riccati_lqf;
use teamlq::grid::{MatrixTrajectory, TimeGrid};
use teamlq::linalg::{max_asymmetry, min_symmetric_eigenvalue};
use teamlq::ode::{propagate_covariance, transition_matrix};
use teamlq::problem::{assemble_augmented, AugmentedCost, DmPartition, LqfProblem, SubsystemBlocks};

fn small_entries(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Transition operators satisfy the semigroup property and are exactly
    /// the identity at coincident nodes.
    #[test]
    fn transition_semigroup(entries in small_entries(9)) {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let a_mat = DMatrix::from_row_slice(3, 3, &entries);
        let a = MatrixTrajectory::constant(grid, a_mat).unwrap();
        let id = transition_matrix(&a, 20, 20).unwrap();
        prop_assert!((id - DMatrix::<f64>::identity(3, 3)).abs().max() == 0.0);
        let lhs = transition_matrix(&a, 32, 56).unwrap() * transition_matrix(&a, 8, 32).unwrap();
        let rhs = transition_matrix(&a, 8, 56).unwrap();
        prop_assert!((lhs - rhs).abs().max() < 1e-8);
    }

    /// Covariance propagation keeps the solution symmetric and PSD whenever
    /// the initial covariance is PSD.
    #[test]
    fn covariance_stays_symmetric_psd(
        a_entries in small_entries(4),
        g_entries in small_entries(4),
        p_half in small_entries(4),
    ) {
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let a = MatrixTrajectory::constant(grid, DMatrix::from_row_slice(2, 2, &a_entries)).unwrap();
        let g = MatrixTrajectory::constant(grid, DMatrix::from_row_slice(2, 2, &g_entries)).unwrap();
        let half = DMatrix::from_row_slice(2, 2, &p_half);
        let p0 = &half * half.transpose();
        let p = propagate_covariance(&a, &g, &p0, &grid).unwrap();
        for k in (0..=50).step_by(10) {
            prop_assert!(max_asymmetry(p.node(k)) <= 1e-10);
            prop_assert!(min_symmetric_eigenvalue(p.node(k)) >= -1e-8);
        }
    }

    /// Assembling subsystem blocks and slicing them back reproduces every
    /// block bit-exactly, and validation is idempotent.
    #[test]
    fn assembly_round_trips_blocks(
        a11 in -1.0f64..1.0, a12 in -1.0f64..1.0,
        a21 in -1.0f64..1.0, a22 in -1.0f64..1.0,
        b11 in -1.0f64..1.0, b21 in -1.0f64..1.0,
        g1 in 0.1f64..1.0, g2 in 0.1f64..1.0,
    ) {
        let blocks = SubsystemBlocks {
            a: vec![
                vec![DMatrix::from_element(1, 1, a11), DMatrix::from_element(1, 1, a12)],
                vec![DMatrix::from_element(1, 1, a21), DMatrix::from_element(1, 1, a22)],
            ],
            b: vec![
                vec![DMatrix::from_element(1, 1, b11), DMatrix::from_element(1, 1, 0.0)],
                vec![DMatrix::from_element(1, 1, b21), DMatrix::from_element(1, 1, 1.0)],
            ],
            g: vec![DMatrix::from_element(1, 1, g1), DMatrix::from_element(1, 1, g2)],
        };
        let cost = AugmentedCost {
            grid: TimeGrid::new(1.0, 8).unwrap(),
            h: DMatrix::identity(2, 2),
            r: DMatrix::identity(2, 2),
            m_term: DMatrix::zeros(2, 2),
            x0_mean: DVector::zeros(2),
            x0_cov: DMatrix::zeros(2, 2),
        };
        let p = assemble_augmented(&blocks, &cost).unwrap();
        prop_assert!(p.validate().is_ok());
        // input column block of DM 0 stacks B_00 over B_10
        let b0 = p.b_block(0).unwrap();
        prop_assert_eq!(b0.node(3)[(0, 0)], b11);
        prop_assert_eq!(b0.node(3)[(1, 0)], b21);
        let s0 = p.dm_slice(0).unwrap();
        prop_assert_eq!(s0.g_ii.node(0)[(0, 0)], g1);
        let a_full = p.a().node(5);
        prop_assert_eq!(a_full[(0, 1)], a12);
        prop_assert_eq!(a_full[(1, 0)], a21);
    }

    /// The centralized gain map is exactly homogeneous in the state.
    #[test]
    fn gain_map_is_homogeneous(scale in -4.0f64..4.0) {
        let p = teamlq::fixtures::two_dm_coupled(40);
        let sol = solve_riccati_lqf(&p).unwrap();
        let strat = teamlq::centralized::centralized_gain(&sol);
        let x = DVector::from_vec(vec![0.7, -0.4]);
        let u1 = strat.control(11, &x);
        let u2 = strat.control(11, &(&x * scale));
        prop_assert!((u2 - &u1 * scale).abs().max() < 1e-12);
    }
}

/// The solvers are generic over the scalar type: the closed-form instance
/// also solves in `f32`, at correspondingly loose tolerance.
#[test]
fn riccati_solves_in_f32() {
    let grid = TimeGrid::<f32>::new(2.0, 400).unwrap();
    let one = DMatrix::<f32>::from_element(1, 1, 1.0);
    let zero = DMatrix::<f32>::from_element(1, 1, 0.0);
    let p = LqfProblem::<f32>::from_constant(
        grid,
        zero.clone(),
        one.clone(),
        zero.clone(),
        one.clone(),
        one,
        zero.clone(),
        DVector::from_element(1, 1.0f32),
        zero,
        DmPartition::new(vec![1], vec![1], vec![1]).unwrap(),
    )
    .unwrap();
    let sol = solve_riccati_lqf(&p).unwrap();
    let k0 = sol.k.node(0)[(0, 0)];
    assert!((k0 - 2.0f32.tanh()).abs() < 1e-3, "f32 kernel {k0}");
}
