//! Centralized-information solvers.
//!
//! With full state information the optimal strategy is linear state feedback
//! `u = -R^{-1} B' K x`, where `K` solves the backward matrix Riccati
//! equation. The normal-form variant adds bilinear noise channels and affine
//! cost terms, giving a generalized Riccati kernel plus a backward offset `r`
//! and feed-forward. The adjoint operators `(Sigma, beta)` realize the affine
//! representation `psi = Sigma x + beta` of the backward adjoint process.
//!
//! Backward Riccati sweeps carry a residual certificate: the solved kernel is
//! substituted back into its equation on the half-step refinement (cubic
//! Hermite defect at interval midpoints) instead of trusting the integrator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{MatrixTrajectory, TimeGrid, VectorTrajectory};
use crate::linalg::{lu_solve, lu_solve_vec, min_symmetric_eigenvalue, symmetrize};
use crate::ode::rk4_step;
use crate::problem::{LqfProblem, NfProblem};
use crate::scalar::Scalar;

/// Backward Riccati kernel with its feedback gain and residual certificate.
#[derive(Debug, Clone)]
pub struct RiccatiSolution<T: Scalar> {
    /// Kernel `K(t)`, symmetric PSD, `K(T) = M_T`.
    pub k: MatrixTrajectory<T>,
    /// Feedback gain `-R^{-1} B' K` (decision rows, state columns).
    pub gain: MatrixTrajectory<T>,
    /// Max Frobenius defect of the Riccati equation on the half-step grid.
    pub residual_max: T,
}

/// Generalized Riccati solution for normal-form problems with `E = 0`.
#[derive(Debug, Clone)]
pub struct NfSolution<T: Scalar> {
    pub k: MatrixTrajectory<T>,
    /// Backward affine offset, `r(T) = N_T`.
    pub r: VectorTrajectory<T>,
    /// Feedback gain `-(R + sum s'Ks)^{-1} (B'K + sum s'K kappa)`.
    pub gain: MatrixTrajectory<T>,
    /// Feed-forward `-(R + sum s'Ks)^{-1} (m + B'r)`.
    pub feed_forward: VectorTrajectory<T>,
}

/// Affine adjoint representation `psi(t) = Sigma(t) x(t) + beta(t)` together
/// with the martingale-intensity columns it induces.
#[derive(Debug, Clone)]
pub struct AdjointOperators<T: Scalar> {
    /// Lyapunov-type kernel, `Sigma(T) = M_T` (no quadratic correction).
    pub sigma: MatrixTrajectory<T>,
    /// Backward offset driven by the supplied mean control, `beta(T) = N_T`.
    pub beta: VectorTrajectory<T>,
    /// Additive part of the intensity columns, `Sigma(t) G^(c)(t)` per noise
    /// channel.
    pub q_const: Vec<VectorTrajectory<T>>,
    kappa: Vec<DMatrix<T>>,
    s_ctrl: Vec<DMatrix<T>>,
}

/// Linear (optionally affine) full-state feedback strategy.
#[derive(Debug, Clone)]
pub struct CentralizedStrategy<T: Scalar> {
    pub gain: MatrixTrajectory<T>,
    pub feed_forward: Option<VectorTrajectory<T>>,
}

impl<T: Scalar> CentralizedStrategy<T> {
    /// Control at node `k` for state `x`.
    pub fn control(&self, k: usize, x: &DVector<T>) -> DVector<T> {
        let mut u = match &self.feed_forward {
            Some(ff) => ff.node(k).clone(),
            None => DVector::zeros(self.gain.rows()),
        };
        u.gemv(T::one(), self.gain.node(k), x, T::one());
        u
    }
}

/// Records the first failure raised inside an RK4 right-hand side, letting
/// the sweep finish with a dummy value before surfacing it.
pub(crate) struct RhsError {
    first: Option<Error>,
}

impl RhsError {
    pub(crate) fn new() -> Self {
        Self { first: None }
    }

    pub(crate) fn record(&mut self, e: Error) {
        if self.first.is_none() {
            self.first = Some(e);
        }
    }

    pub(crate) fn take(self) -> Result<()> {
        match self.first {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

pub(crate) fn nearest_node<T: Scalar>(grid: &TimeGrid<T>, t: T) -> usize {
    let pos = (t / grid.h()).as_f64().round();
    (pos.max(0.0) as usize).min(grid.n_steps())
}

/// Backward sweep of `dK/dt = -(A'K + KA - K B R^{-1} B' K + H)` from
/// `K(T) = m_term`, re-symmetrized each step.
///
/// `b` and `r_cost` may be any input block / weight pair (the per-DM solves
/// pass `B^(i)` and `R_ii`), while `a` and `h_cost` are the full augmented
/// matrices.
pub(crate) fn solve_riccati_with<T: Scalar>(
    grid: &TimeGrid<T>,
    a: &MatrixTrajectory<T>,
    b: &MatrixTrajectory<T>,
    h_cost: &MatrixTrajectory<T>,
    r_cost: &MatrixTrajectory<T>,
    m_term: &DMatrix<T>,
) -> Result<RiccatiSolution<T>> {
    let n = a.rows();
    let rhs = |t: T, k: &DMatrix<T>, err: &mut RhsError| -> DMatrix<T> {
        let at = a.sample(t);
        let bt = b.sample(t);
        let rt = r_cost.sample(t);
        let ht = h_cost.sample(t);
        let btk = bt.transpose() * k;
        let x = match lu_solve(&rt, &btk) {
            Some(x) => x,
            None => {
                err.record(Error::SingularInnerMatrix {
                    node: nearest_node(grid, t),
                });
                return DMatrix::zeros(n, n);
            }
        };
        // dK = (K B) (R^{-1} B' K) - A'K - KA - H
        let mut dk = k * &bt * &x;
        dk.gemm(-T::one(), &at.transpose(), k, T::one());
        dk.gemm(-T::one(), k, &at, T::one());
        dk -= &ht;
        dk
    };

    let steps = grid.n_steps();
    let hstep = grid.h();
    let mut rhs_err = RhsError::new();
    let mut values = vec![DMatrix::zeros(0, 0); grid.n_nodes()];
    let mut k_mat = m_term.clone();
    symmetrize(&mut k_mat);
    values[steps] = k_mat.clone();
    for idx in (1..=steps).rev() {
        let mut wrapped = |t: T, y: &DMatrix<T>| rhs(t, y, &mut rhs_err);
        k_mat = rk4_step(&mut wrapped, grid.time(idx), &k_mat, -hstep);
        symmetrize(&mut k_mat);
        if !k_mat.iter().all(|v| v.is_finite_scalar()) {
            return Err(Error::IntegrationDiverged { node: idx - 1 });
        }
        values[idx - 1] = k_mat.clone();
    }
    rhs_err.take()?;

    let k_traj = MatrixTrajectory::from_nodes(*grid, values)?;

    for idx in 0..grid.n_nodes() {
        let min = min_symmetric_eigenvalue(k_traj.node(idx));
        if min < -T::lit(1e-8) {
            return Err(Error::NotPsd {
                what: format!("Riccati kernel at node {idx}"),
                eigenvalue: min.as_f64(),
            });
        }
    }

    let mut gain_nodes = Vec::with_capacity(grid.n_nodes());
    for idx in 0..grid.n_nodes() {
        let btk = b.node(idx).transpose() * k_traj.node(idx);
        let x = lu_solve(r_cost.node(idx), &btk)
            .ok_or(Error::SingularInnerMatrix { node: idx })?;
        gain_nodes.push(-x);
    }
    let gain = MatrixTrajectory::from_nodes(*grid, gain_nodes)?;

    // Residual certificate on the half-step refinement.
    let mut err2 = RhsError::new();
    let mut residual_max = T::zero();
    let mut f_right = rhs(grid.time(steps), k_traj.node(steps), &mut err2);
    for idx in (0..steps).rev() {
        let f_left = rhs(grid.time(idx), k_traj.node(idx), &mut err2);
        let (y_mid, d_mid) = hermite_midpoint(
            hstep,
            k_traj.node(idx),
            k_traj.node(idx + 1),
            &f_left,
            &f_right,
        );
        let t_mid = grid.time(idx) + hstep * T::lit(0.5);
        let f_mid = rhs(t_mid, &y_mid, &mut err2);
        residual_max = residual_max.max((d_mid - f_mid).norm());
        f_right = f_left;
    }
    err2.take()?;

    Ok(RiccatiSolution {
        k: k_traj,
        gain,
        residual_max,
    })
}

/// Value and derivative of the cubic Hermite interpolant at the interval
/// midpoint, from endpoint values and slopes.
fn hermite_midpoint<T: Scalar>(
    h: T,
    y_left: &DMatrix<T>,
    y_right: &DMatrix<T>,
    f_left: &DMatrix<T>,
    f_right: &DMatrix<T>,
) -> (DMatrix<T>, DMatrix<T>) {
    let half = T::lit(0.5);
    let eighth = T::lit(0.125);
    let quarter = T::lit(0.25);

    // H(mid) = (y_l + y_r)/2 + h (f_l - f_r)/8
    let mut y_mid = y_left.clone();
    y_mid.zip_apply(y_right, |s, o| *s = (*s + o) * half);
    y_mid.zip_apply(f_left, |s, o| *s += h * eighth * o);
    y_mid.zip_apply(f_right, |s, o| *s -= h * eighth * o);

    // H'(mid) = 3 (y_r - y_l) / (2h) - (f_l + f_r)/4
    let c = T::lit(1.5) / h;
    let mut d_mid = y_right - y_left;
    d_mid *= c;
    d_mid.zip_apply(f_left, |s, o| *s -= quarter * o);
    d_mid.zip_apply(f_right, |s, o| *s -= quarter * o);

    (y_mid, d_mid)
}

/// Optimal centralized kernel for a linear-quadratic problem.
pub fn solve_riccati_lqf<T: Scalar>(problem: &LqfProblem<T>) -> Result<RiccatiSolution<T>> {
    solve_riccati_with(
        problem.grid(),
        problem.a(),
        problem.b(),
        problem.h(),
        problem.r(),
        problem.m_term(),
    )
}

/// Full-state feedback map `u = -R^{-1} B' K x` from a solved kernel.
pub fn centralized_gain<T: Scalar>(sol: &RiccatiSolution<T>) -> CentralizedStrategy<T> {
    CentralizedStrategy {
        gain: sol.gain.clone(),
        feed_forward: None,
    }
}

/// Centralized strategy for a normal-form problem (gain plus feed-forward).
pub fn nf_strategy<T: Scalar>(sol: &NfSolution<T>) -> CentralizedStrategy<T> {
    CentralizedStrategy {
        gain: sol.gain.clone(),
        feed_forward: Some(sol.feed_forward.clone()),
    }
}

/// Inner weight `Theta = R + sum_c s_c' K s_c` and mixed term
/// `L = B'K + sum_c s_c' K kappa_c` of the generalized Riccati flow.
struct NfTerms<T: Scalar> {
    theta: DMatrix<T>,
    l: DMatrix<T>,
}

fn nf_terms<T: Scalar>(
    k: &DMatrix<T>,
    bt: &DMatrix<T>,
    rt: &DMatrix<T>,
    kappa: &[DMatrix<T>],
    s_ctrl: &[DMatrix<T>],
) -> NfTerms<T> {
    let mut theta = rt.clone();
    let mut l = bt.transpose() * k;
    for (c, s_c) in s_ctrl.iter().enumerate() {
        let ks = k * s_c;
        theta.gemm(T::one(), &s_c.transpose(), &ks, T::one());
        if !kappa.is_empty() {
            let sk = s_c.transpose() * k;
            l.gemm(T::one(), &sk, &kappa[c], T::one());
        }
    }
    symmetrize(&mut theta);
    NfTerms { theta, l }
}

/// Generalized Riccati solve for a normal-form problem with `E = 0`.
///
/// Kernel and offset are integrated as one stacked backward state so the
/// offset sees stage-consistent kernel values. The optimal strategy is
/// `u = -(R + sum s'Ks)^{-1} { (B'K + sum s'K kappa) x + m + B' r }`.
pub fn solve_nf<T: Scalar>(problem: &NfProblem<T>) -> Result<NfSolution<T>> {
    if !problem.cross_is_zero() {
        return Err(Error::Precondition {
            what: "normal-form centralized solve requires E = 0".into(),
        });
    }
    let lqf = problem.lqf();
    let grid = *lqf.grid();
    let n = lqf.n();
    let kappa = problem.kappa();
    let s_ctrl = problem.s_ctrl();

    // Stacked backward state: columns 0..n hold K, column n holds r.
    let rhs = |t: T, state: &DMatrix<T>, err: &mut RhsError| -> DMatrix<T> {
        let k = state.columns(0, n).into_owned();
        let r_off = state.column(n).into_owned();
        let at = lqf.a().sample(t);
        let bt = lqf.b().sample(t);
        let rt = lqf.r().sample(t);
        let ht = lqf.h().sample(t);
        let gt = lqf.g().sample(t);
        let drift = problem.drift().sample(t);
        let ft = problem.state_lin().sample(t);
        let mt = problem.control_lin().sample(t);

        let terms = nf_terms(&k, &bt, &rt, kappa, s_ctrl);
        let x = match lu_solve(&terms.theta, &terms.l) {
            Some(x) => x,
            None => {
                err.record(Error::SingularInnerMatrix {
                    node: nearest_node(&grid, t),
                });
                return DMatrix::zeros(n, n + 1);
            }
        };
        let y = lu_solve_vec(&terms.theta, &mt).expect("theta factorized above");

        // dK = L' X - A'K - KA - sum kappa' K kappa - H
        let mut dk = terms.l.transpose() * &x;
        dk.gemm(-T::one(), &at.transpose(), &k, T::one());
        dk.gemm(-T::one(), &k, &at, T::one());
        for kap in kappa {
            let kk = &k * kap;
            dk.gemm(-T::one(), &kap.transpose(), &kk, T::one());
        }
        dk -= &ht;

        // dr = -(A - B Theta^{-1} L)' r - F - K b - sum kappa' K G^(c)
        //      + L' Theta^{-1} m
        let mut a_cl = at;
        a_cl.gemm(-T::one(), &bt, &x, T::one());
        let mut dr = -(a_cl.transpose() * &r_off);
        dr -= &ft;
        dr.gemv(-T::one(), &k, &drift, T::one());
        for (c, kap) in kappa.iter().enumerate() {
            let kg = &k * gt.column(c).into_owned();
            dr.gemv(-T::one(), &kap.transpose(), &kg, T::one());
        }
        dr.gemv(T::one(), &terms.l.transpose(), &y, T::one());

        let mut out = DMatrix::zeros(n, n + 1);
        out.columns_mut(0, n).copy_from(&dk);
        out.column_mut(n).copy_from(&dr);
        out
    };

    let steps = grid.n_steps();
    let hstep = grid.h();
    let mut rhs_err = RhsError::new();
    let mut state = DMatrix::zeros(n, n + 1);
    let mut m_sym = lqf.m_term().clone();
    symmetrize(&mut m_sym);
    state.columns_mut(0, n).copy_from(&m_sym);
    state.column_mut(n).copy_from(problem.term_lin());

    let mut k_nodes = vec![DMatrix::zeros(0, 0); grid.n_nodes()];
    let mut r_nodes = vec![DVector::zeros(0); grid.n_nodes()];
    k_nodes[steps] = m_sym;
    r_nodes[steps] = problem.term_lin().clone();
    for idx in (1..=steps).rev() {
        let mut wrapped = |t: T, y: &DMatrix<T>| rhs(t, y, &mut rhs_err);
        state = rk4_step(&mut wrapped, grid.time(idx), &state, -hstep);
        {
            let mut k_owned = state.columns(0, n).into_owned();
            symmetrize(&mut k_owned);
            state.columns_mut(0, n).copy_from(&k_owned);
        }
        if !state.iter().all(|v| v.is_finite_scalar()) {
            return Err(Error::IntegrationDiverged { node: idx - 1 });
        }
        k_nodes[idx - 1] = state.columns(0, n).into_owned();
        r_nodes[idx - 1] = state.column(n).into_owned();
    }
    rhs_err.take()?;

    let k_traj = MatrixTrajectory::from_nodes(grid, k_nodes)?;
    let r_traj = VectorTrajectory::from_nodes(grid, r_nodes)?;

    let mut gain_nodes = Vec::with_capacity(grid.n_nodes());
    let mut ff_nodes = Vec::with_capacity(grid.n_nodes());
    for idx in 0..grid.n_nodes() {
        let k = k_traj.node(idx);
        let bt = lqf.b().node(idx);
        let terms = nf_terms(k, bt, lqf.r().node(idx), kappa, s_ctrl);
        let gain =
            lu_solve(&terms.theta, &terms.l).ok_or(Error::SingularInnerMatrix { node: idx })?;
        let mut aff = problem.control_lin().node(idx).clone();
        aff.gemv(T::one(), &bt.transpose(), r_traj.node(idx), T::one());
        let ff = lu_solve_vec(&terms.theta, &aff)
            .ok_or(Error::SingularInnerMatrix { node: idx })?;
        gain_nodes.push(-gain);
        ff_nodes.push(-ff);
    }

    Ok(NfSolution {
        k: k_traj,
        r: r_traj,
        gain: MatrixTrajectory::from_nodes(grid, gain_nodes)?,
        feed_forward: VectorTrajectory::from_nodes(grid, ff_nodes)?,
    })
}

/// Backward adjoint operators `(Sigma, beta)` realizing
/// `psi = Sigma x + beta`.
///
/// `Sigma` solves the Lyapunov-type equation (no quadratic correction);
/// `beta` is driven by the supplied deterministic control trajectory (for
/// team problems, the mean control). Both are integrated as one stacked
/// state.
pub fn solve_adjoint_operators<T: Scalar>(
    problem: &NfProblem<T>,
    u_mean: &VectorTrajectory<T>,
) -> Result<AdjointOperators<T>> {
    let lqf = problem.lqf();
    let grid = *lqf.grid();
    let n = lqf.n();
    if u_mean.dim() != lqf.d() || u_mean.grid() != lqf.grid() {
        return Err(Error::DimensionMismatch {
            field: "u_mean".into(),
            expected: format!("{} on the problem grid", lqf.d()),
            found: format!("{}", u_mean.dim()),
        });
    }
    let kappa = problem.kappa();
    let s_ctrl = problem.s_ctrl();

    // Stacked backward state: columns 0..n hold Sigma, column n holds beta.
    let mut rhs = |t: T, state: &DMatrix<T>| -> DMatrix<T> {
        let sig = state.columns(0, n).into_owned();
        let beta = state.column(n).into_owned();
        let at = lqf.a().sample(t);
        let ht = lqf.h().sample(t);
        let gt = lqf.g().sample(t);
        let bt = lqf.b().sample(t);
        let ut = u_mean.eval4(t);
        let et = problem.cross().sample(t);
        let ft = problem.state_lin().sample(t);
        let drift = problem.drift().sample(t);

        // dSigma = -(A' Sigma + Sigma A + sum kappa' Sigma kappa + H)
        let mut dsig = -(at.transpose() * &sig);
        dsig.gemm(-T::one(), &sig, &at, T::one());
        for kap in kappa {
            let sk = &sig * kap;
            dsig.gemm(-T::one(), &kap.transpose(), &sk, T::one());
        }
        dsig -= &ht;

        // dbeta = -(A' beta + Sigma b + F + Sigma B u + E' u
        //           + sum kappa' Sigma (s_c u + G^(c)))
        let mut dbeta = -(at.transpose() * &beta);
        dbeta.gemv(-T::one(), &sig, &drift, T::one());
        dbeta -= &ft;
        let bu = &bt * &ut;
        dbeta.gemv(-T::one(), &sig, &bu, T::one());
        dbeta.gemv(-T::one(), &et.transpose(), &ut, T::one());
        for (c, kap) in kappa.iter().enumerate() {
            let mut col = gt.column(c).into_owned();
            if !s_ctrl.is_empty() {
                col.gemv(T::one(), &s_ctrl[c], &ut, T::one());
            }
            let sig_col = &sig * col;
            dbeta.gemv(-T::one(), &kap.transpose(), &sig_col, T::one());
        }

        let mut out = DMatrix::zeros(n, n + 1);
        out.columns_mut(0, n).copy_from(&dsig);
        out.column_mut(n).copy_from(&dbeta);
        out
    };

    let steps = grid.n_steps();
    let hstep = grid.h();
    let mut state = DMatrix::zeros(n, n + 1);
    let mut m_sym = lqf.m_term().clone();
    symmetrize(&mut m_sym);
    state.columns_mut(0, n).copy_from(&m_sym);
    state.column_mut(n).copy_from(problem.term_lin());

    let mut sig_nodes = vec![DMatrix::zeros(0, 0); grid.n_nodes()];
    let mut beta_nodes = vec![DVector::zeros(0); grid.n_nodes()];
    sig_nodes[steps] = m_sym;
    beta_nodes[steps] = problem.term_lin().clone();
    for idx in (1..=steps).rev() {
        state = rk4_step(&mut rhs, grid.time(idx), &state, -hstep);
        {
            let mut owned = state.columns(0, n).into_owned();
            symmetrize(&mut owned);
            state.columns_mut(0, n).copy_from(&owned);
        }
        if !state.iter().all(|v| v.is_finite_scalar()) {
            return Err(Error::IntegrationDiverged { node: idx - 1 });
        }
        sig_nodes[idx - 1] = state.columns(0, n).into_owned();
        beta_nodes[idx - 1] = state.column(n).into_owned();
    }

    let sigma = MatrixTrajectory::from_nodes(grid, sig_nodes)?;
    let beta = VectorTrajectory::from_nodes(grid, beta_nodes)?;

    let m = lqf.m();
    let mut q_const = Vec::with_capacity(m);
    for c in 0..m {
        let nodes = (0..grid.n_nodes())
            .map(|idx| sigma.node(idx) * lqf.g().node(idx).column(c).into_owned())
            .collect();
        q_const.push(VectorTrajectory::from_nodes(grid, nodes)?);
    }

    Ok(AdjointOperators {
        sigma,
        beta,
        q_const,
        kappa: kappa.to_vec(),
        s_ctrl: s_ctrl.to_vec(),
    })
}

impl<T: Scalar> AdjointOperators<T> {
    /// Intensity column `Q^(c)(t_k) = Sigma (kappa_c x + s_c u + G^(c))` for
    /// a given state/control pair.
    pub fn q_block(&self, k: usize, c: usize, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let mut q = self.q_const[c].node(k).clone();
        let sigma = self.sigma.node(k);
        if !self.kappa.is_empty() {
            let kx = &self.kappa[c] * x;
            q.gemv(T::one(), sigma, &kx, T::one());
        }
        if !self.s_ctrl.is_empty() {
            let su = &self.s_ctrl[c] * u;
            q.gemv(T::one(), sigma, &su, T::one());
        }
        q
    }

    /// Full intensity matrix `Q(t_k)` (state rows, one column per channel).
    pub fn q_at(&self, k: usize, x: &DVector<T>, u: &DVector<T>) -> DMatrix<T> {
        let n = self.sigma.rows();
        let m = self.q_const.len();
        let mut q = DMatrix::zeros(n, m);
        for c in 0..m {
            q.column_mut(c).copy_from(&self.q_block(k, c, x, u));
        }
        q
    }

    /// State-derivative contraction `V_Q(t_k) = sum_c kappa_c' Q^(c)`.
    pub fn v_q_at(&self, k: usize, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let n = self.sigma.rows();
        let mut v = DVector::zeros(n);
        for (c, kap) in self.kappa.iter().enumerate() {
            let q = self.q_block(k, c, x, u);
            v.gemv(T::one(), &kap.transpose(), &q, T::one());
        }
        v
    }
}
