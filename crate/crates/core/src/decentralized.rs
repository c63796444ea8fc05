//! Decentralized team-optimal solver.
//!
//! Each decision maker observes only its own Brownian path, so its strategy
//! is affine in its own filter state:
//! `u^i = -R_ii^{-1} B^(i)' (K^i x_hat^i + r^i) - R_ii^{-1} sum_{j!=i} R_ij u_bar^j`.
//! The per-DM kernels `K^i` solve Riccati equations built from the DM's own
//! input block, while the offsets `r^i`, the mean state `x_bar` and the mean
//! strategies `u_bar` solve a coupled forward-backward system closed by a
//! node-wise linear coupling equation. That system is solved here by damped
//! Picard iteration over the mean strategies.
//!
//! The backward offset equations are driven by transition-operator
//! coefficients that contract exactly to the solved kernel `K^i` (the kernel
//! equals its own variation-of-constants representation), so the sweeps use
//! `K^i` directly instead of quadratures over transition matrices.

use nalgebra::{DMatrix, DVector, LU};

use crate::centralized::{solve_riccati_with, CentralizedStrategy, RiccatiSolution};
use crate::error::{Error, Result};
use crate::grid::{MatrixTrajectory, VectorTrajectory};
use crate::linalg::{lu_solve, lu_solve_vec};
use crate::ode::rk4_step;
use crate::problem::LqfProblem;
use crate::scalar::Scalar;

/// Per-decision-maker Riccati kernels.
#[derive(Debug, Clone)]
pub struct DmRiccatiSet<T: Scalar> {
    /// One solution per DM; `per_dm[i].gain` is `-R_ii^{-1} B^(i)' K^i`.
    pub per_dm: Vec<RiccatiSolution<T>>,
}

impl<T: Scalar> DmRiccatiSet<T> {
    pub fn n_dms(&self) -> usize {
        self.per_dm.len()
    }

    pub fn kernel(&self, i: usize) -> &MatrixTrajectory<T> {
        &self.per_dm[i].k
    }
}

/// Converged mean-field trajectories with the iteration record.
#[derive(Debug, Clone)]
pub struct MeanFieldSolution<T: Scalar> {
    /// Backward offsets `r^i`, `r^i(T) = 0`.
    pub r: Vec<VectorTrajectory<T>>,
    /// Mean state, `x_bar(0) = x0_mean`.
    pub x_bar: VectorTrajectory<T>,
    /// Mean strategies `u_bar^i`.
    pub u_bar: Vec<VectorTrajectory<T>>,
    /// Picard iterations used.
    pub iterations: usize,
    /// Max node-wise sup-norm defect of the coupling system at the returned
    /// triple.
    pub final_residual: T,
    /// Damping factor used.
    pub damping: T,
}

/// Options for the damped Picard iteration.
#[derive(Debug, Clone, Copy)]
pub struct PicardOptions<T: Scalar> {
    pub max_iter: usize,
    pub tol: T,
    pub damping: T,
}

impl<T: Scalar> Default for PicardOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: T::lit(1e-8),
            damping: T::lit(0.5),
        }
    }
}

impl<T: Scalar> PicardOptions<T> {
    fn validate(&self) -> Result<()> {
        let damping_ok = self.damping.is_finite_scalar()
            && self.damping > T::zero()
            && self.damping <= T::one();
        if self.max_iter == 0 || !damping_ok {
            return Err(Error::Config {
                what: format!(
                    "picard options require max_iter >= 1 and 0 < damping <= 1, got {} / {}",
                    self.max_iter,
                    self.damping.as_f64()
                ),
            });
        }
        Ok(())
    }
}

/// Affine per-DM strategy maps plus everything they were built from.
#[derive(Debug, Clone)]
pub struct DecentralizedStrategy<T: Scalar> {
    pub riccati: DmRiccatiSet<T>,
    pub mean_field: MeanFieldSolution<T>,
    /// Filter-state gains `-R_ii^{-1} B^(i)' K^i` (`d_i x n`).
    pub gains: Vec<MatrixTrajectory<T>>,
    /// Constant terms `-R_ii^{-1} (B^(i)' r^i + sum_{j!=i} R_ij u_bar^j)`.
    pub offsets: Vec<VectorTrajectory<T>>,
}

impl<T: Scalar> DecentralizedStrategy<T> {
    pub fn n_dms(&self) -> usize {
        self.gains.len()
    }

    /// DM `i`'s control at node `k` given its filter state.
    pub fn control(&self, i: usize, k: usize, x_hat: &DVector<T>) -> DVector<T> {
        let mut u = self.offsets[i].node(k).clone();
        u.gemv(T::one(), self.gains[i].node(k), x_hat, T::one());
        u
    }
}

/// Riccati kernel for one decision maker: the centralized equation with the
/// input and control weight restricted to `B^(i)`, `R_ii`.
pub fn solve_dm_riccati<T: Scalar>(
    problem: &LqfProblem<T>,
    i: usize,
) -> Result<RiccatiSolution<T>> {
    let slice = problem.dm_slice(i)?;
    solve_riccati_with(
        problem.grid(),
        problem.a(),
        &slice.b_i,
        problem.h(),
        &slice.r_ii,
        problem.m_term(),
    )
}

/// Solves all per-DM kernels.
pub fn solve_all_dm_riccati<T: Scalar>(problem: &LqfProblem<T>) -> Result<DmRiccatiSet<T>> {
    let per_dm = (0..problem.n_dms())
        .map(|i| solve_dm_riccati(problem, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(DmRiccatiSet { per_dm })
}

/// One DM's normalized cross blocks `(j, R_ii^{-1} R_ij)` at one node.
type CrossBlocks<T> = Vec<(usize, DMatrix<T>)>;

/// Node-wise data for the mean-strategy coupling solve.
struct CouplingSystem<T: Scalar> {
    /// Factored coupling matrices, one per node (identity diagonal blocks,
    /// `R_ii^{-1} R_ij` off-diagonal).
    lus: Vec<LU<T, nalgebra::Dyn, nalgebra::Dyn>>,
    /// `R_ii^{-1} B^(i)' K^i` per node, stacked over DMs (`d x n`).
    k_weight: Vec<DMatrix<T>>,
    /// `R_ii^{-1} B^(i)'` per DM per node (`d_i x n`).
    r_weight: Vec<Vec<DMatrix<T>>>,
    /// Normalized cross blocks `R_ii^{-1} R_ij` per node per DM, `j != i`.
    offdiag: Vec<Vec<CrossBlocks<T>>>,
}

impl<T: Scalar> CouplingSystem<T> {
    fn build(problem: &LqfProblem<T>, riccati: &DmRiccatiSet<T>) -> Result<Self> {
        let part = problem.partition();
        let n_dms = part.n_dms();
        let (n, d) = (part.n(), part.d());
        let nodes = problem.grid().n_nodes();

        let mut lus = Vec::with_capacity(nodes);
        let mut k_weight = Vec::with_capacity(nodes);
        let mut r_weight = Vec::with_capacity(nodes);
        let mut offdiag = Vec::with_capacity(nodes);
        for k in 0..nodes {
            let r_full = problem.r().node(k);
            let b_full = problem.b().node(k);
            let mut coupling = DMatrix::<T>::identity(d, d);
            let mut kw = DMatrix::<T>::zeros(d, n);
            let mut rw_dm = Vec::with_capacity(n_dms);
            let mut od_dm = Vec::with_capacity(n_dms);
            for i in 0..n_dms {
                let di = part.decision_range(i);
                let r_ii = r_full
                    .view((di.start, di.start), (di.len(), di.len()))
                    .into_owned();
                let b_i_t = b_full
                    .columns(di.start, di.len())
                    .transpose()
                    .into_owned();
                let rib = lu_solve(&r_ii, &b_i_t)
                    .ok_or(Error::SingularCoupling { node: k })?;
                let mut od = Vec::with_capacity(n_dms.saturating_sub(1));
                for j in 0..n_dms {
                    if j == i {
                        continue;
                    }
                    let dj = part.decision_range(j);
                    let r_ij = r_full
                        .view((di.start, dj.start), (di.len(), dj.len()))
                        .into_owned();
                    let rij_solved = lu_solve(&r_ii, &r_ij)
                        .ok_or(Error::SingularCoupling { node: k })?;
                    coupling
                        .view_mut((di.start, dj.start), (di.len(), dj.len()))
                        .copy_from(&rij_solved);
                    od.push((j, rij_solved));
                }
                kw.view_mut((di.start, 0), (di.len(), n))
                    .copy_from(&(&rib * riccati.per_dm[i].k.node(k)));
                rw_dm.push(rib);
                od_dm.push(od);
            }
            let lu = coupling.lu();
            // A singular coupling matrix aborts the solve; no regularization.
            if !lu.is_invertible() {
                return Err(Error::SingularCoupling { node: k });
            }
            lus.push(lu);
            k_weight.push(kw);
            r_weight.push(rw_dm);
            offdiag.push(od_dm);
        }
        Ok(Self {
            lus,
            k_weight,
            r_weight,
            offdiag,
        })
    }

    /// Right-hand side `v` of the coupling system at node `k`:
    /// `v_i = R_ii^{-1} B^(i)' (K^i x_bar + r^i)`.
    fn rhs(
        &self,
        part: &crate::problem::DmPartition,
        k: usize,
        x_bar: &DVector<T>,
        r: &[VectorTrajectory<T>],
    ) -> DVector<T> {
        let d = self.k_weight[k].nrows();
        let mut v = DVector::<T>::zeros(d);
        v.gemv(T::one(), &self.k_weight[k], x_bar, T::zero());
        for i in 0..part.n_dms() {
            let di = part.decision_range(i);
            let mut vi = v.rows_mut(di.start, di.len());
            let contrib = &self.r_weight[k][i] * r[i].node(k);
            vi += contrib;
        }
        v
    }

    /// Sup-norm defect `|M u_bar + v|` of the coupling system at node `k`.
    fn defect(
        &self,
        part: &crate::problem::DmPartition,
        k: usize,
        u_bar: &[VectorTrajectory<T>],
        v: &DVector<T>,
    ) -> T {
        let mut defect = v.clone();
        for i in 0..part.n_dms() {
            let di = part.decision_range(i);
            let mut block = defect.rows_mut(di.start, di.len());
            block.axpy(T::one(), u_bar[i].node(k), T::one());
            for (j, rr) in &self.offdiag[k][i] {
                let contrib = rr * u_bar[*j].node(k);
                block += contrib;
            }
        }
        defect.abs().max()
    }

    /// Solves the coupling system at node `k`; returns the stacked mean
    /// strategy `u_bar = -M^{-1} v`.
    fn solve(&self, k: usize, v: &DVector<T>) -> Result<DVector<T>> {
        let sol = self.lus[k]
            .solve(v)
            .ok_or(Error::SingularCoupling { node: k })?;
        Ok(-sol)
    }
}

/// Solves the coupled offsets / mean state / mean strategies by damped
/// Picard iteration.
///
/// One pass: (a) integrate each `r^i` backward from `r^i(T) = 0` with the
/// current mean strategies as forcing, (b) integrate the mean state forward,
/// (c) form the node-wise coupling defect and solve for updated mean
/// strategies, (d) damp. Convergence is declared on the defect of the
/// *current* triple, so the returned trajectories are mutually consistent.
pub fn solve_mean_field<T: Scalar>(
    problem: &LqfProblem<T>,
    riccati: &DmRiccatiSet<T>,
    opts: &PicardOptions<T>,
) -> Result<MeanFieldSolution<T>> {
    opts.validate()?;
    let part = problem.partition();
    let n_dms = part.n_dms();
    if riccati.n_dms() != n_dms {
        return Err(Error::DimensionMismatch {
            field: "riccati set".into(),
            expected: format!("{n_dms} kernels"),
            found: format!("{}", riccati.n_dms()),
        });
    }
    let grid = *problem.grid();
    let n = part.n();
    let nodes = grid.n_nodes();
    let hstep = grid.h();

    let coupling = CouplingSystem::build(problem, riccati)?;

    // Closed-loop drift A_{K^i} = A - B^(i) R_ii^{-1} B^(i)' K^i and forcing
    // maps D_ij = K^i (B^(j) - B^(i) R_ii^{-1} R_ij), precomputed per node.
    let mut acl: Vec<MatrixTrajectory<T>> = Vec::with_capacity(n_dms);
    let mut forcing: Vec<Vec<(usize, MatrixTrajectory<T>)>> = Vec::with_capacity(n_dms);
    for i in 0..n_dms {
        let di = part.decision_range(i);
        let mut acl_nodes = Vec::with_capacity(nodes);
        let mut d_nodes: Vec<Vec<DMatrix<T>>> =
            (0..n_dms).map(|_| Vec::with_capacity(nodes)).collect();
        for k in 0..nodes {
            let a_k = problem.a().node(k);
            let b_full = problem.b().node(k);
            let b_i = b_full.columns(di.start, di.len()).into_owned();
            let k_i = riccati.per_dm[i].k.node(k);
            // gain_i = -R_ii^{-1} B^(i)' K^i is already solved.
            let gain_i = riccati.per_dm[i].gain.node(k);
            let mut a_cl = a_k.clone();
            a_cl.gemm(T::one(), &b_i, gain_i, T::one());
            acl_nodes.push(a_cl);
            for (j, rr) in &coupling.offdiag[k][i] {
                let dj = part.decision_range(*j);
                // C_ij = B^(j) - B^(i) R_ii^{-1} R_ij
                let mut c_ij = b_full.columns(dj.start, dj.len()).into_owned();
                c_ij.gemm(-T::one(), &b_i, rr, T::one());
                d_nodes[*j].push(k_i * c_ij);
            }
        }
        acl.push(MatrixTrajectory::from_nodes(grid, acl_nodes)?);
        let mut f_i = Vec::new();
        for (j, nodes_j) in d_nodes.into_iter().enumerate() {
            if j != i {
                f_i.push((j, MatrixTrajectory::from_nodes(grid, nodes_j)?));
            }
        }
        forcing.push(f_i);
    }

    let mut u_bar: Vec<VectorTrajectory<T>> = (0..n_dms)
        .map(|i| VectorTrajectory::zeros(grid, part.decision_dims()[i]))
        .collect();

    let mut last_residual = T::zero();
    for iter in 1..=opts.max_iter {
        // (a) Backward offset sweeps driven by the current mean strategies.
        let mut r_new = Vec::with_capacity(n_dms);
        for i in 0..n_dms {
            let acl_i = &acl[i];
            let forcing_i = &forcing[i];
            let u_ref = &u_bar;
            let mut rhs = |t: T, y: &DVector<T>| -> DVector<T> {
                let mut dy = -(acl_i.eval4(t).transpose() * y);
                for (j, d_ij) in forcing_i {
                    let u_j = u_ref[*j].eval4(t);
                    dy.gemv(-T::one(), &d_ij.eval4(t), &u_j, T::one());
                }
                dy
            };
            let mut vals = vec![DVector::<T>::zeros(n); nodes];
            let mut y = DVector::<T>::zeros(n);
            for idx in (1..=grid.n_steps()).rev() {
                y = rk4_step(&mut rhs, grid.time(idx), &y, -hstep);
                if !y.iter().all(|v| v.is_finite_scalar()) {
                    return Err(Error::IntegrationDiverged { node: idx - 1 });
                }
                vals[idx - 1] = y.clone();
            }
            r_new.push(VectorTrajectory::from_nodes(grid, vals)?);
        }

        // (b) Forward mean-state sweep.
        let u_ref = &u_bar;
        let mut rhs_x = |t: T, y: &DVector<T>| -> DVector<T> {
            let mut dy = problem.a().sample(t) * y;
            let b_t = problem.b().sample(t);
            for (i, u_i) in u_ref.iter().enumerate() {
                let di = part.decision_range(i);
                let b_i = b_t.columns(di.start, di.len()).into_owned();
                dy.gemv(T::one(), &b_i, &u_i.eval4(t), T::one());
            }
            dy
        };
        let mut x_vals = vec![DVector::<T>::zeros(n); nodes];
        let mut x = problem.x0_mean().clone();
        x_vals[0] = x.clone();
        for idx in 0..grid.n_steps() {
            x = rk4_step(&mut rhs_x, grid.time(idx), &x, hstep);
            if !x.iter().all(|v| v.is_finite_scalar()) {
                return Err(Error::IntegrationDiverged { node: idx + 1 });
            }
            x_vals[idx + 1] = x.clone();
        }
        let x_bar = VectorTrajectory::from_nodes(grid, x_vals)?;

        // (c) Node-wise coupling defect and solve.
        let mut residual = T::zero();
        let mut u_solve: Vec<VectorTrajectory<T>> = (0..n_dms)
            .map(|i| VectorTrajectory::zeros(grid, part.decision_dims()[i]))
            .collect();
        for k in 0..nodes {
            let v = coupling.rhs(part, k, x_bar.node(k), &r_new);
            residual = residual.max(coupling.defect(part, k, &u_bar, &v));

            let solved = coupling.solve(k, &v)?;
            for i in 0..n_dms {
                let di = part.decision_range(i);
                u_solve[i]
                    .node_mut(k)
                    .copy_from(&solved.rows(di.start, di.len()).into_owned());
            }
        }

        if residual <= opts.tol {
            return Ok(MeanFieldSolution {
                r: r_new,
                x_bar,
                u_bar,
                iterations: iter,
                final_residual: residual,
                damping: opts.damping,
            });
        }
        last_residual = residual;

        // (d) Damped update.
        let lam = opts.damping;
        for i in 0..n_dms {
            for k in 0..nodes {
                let mut node = u_bar[i].node(k).clone();
                node.axpy(lam, u_solve[i].node(k), T::one() - lam);
                u_bar[i].node_mut(k).copy_from(&node);
            }
        }
    }

    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: last_residual.as_f64(),
    })
}

/// N-decision-maker entry point for the mean-field fixed point; identical
/// contract to [`solve_mean_field`] with the coupling stacked over all DMs.
pub fn solve_fixed_point_general<T: Scalar>(
    problem: &LqfProblem<T>,
    riccati: &DmRiccatiSet<T>,
    opts: &PicardOptions<T>,
) -> Result<MeanFieldSolution<T>> {
    if problem.n_dms() < 2 {
        return Err(Error::Precondition {
            what: "general fixed point requires at least two decision makers".into(),
        });
    }
    solve_mean_field(problem, riccati, opts)
}

/// Assembles the per-DM affine strategy maps from the solved kernels and
/// mean field.
pub fn make_strategy<T: Scalar>(
    problem: &LqfProblem<T>,
    riccati: DmRiccatiSet<T>,
    mean_field: MeanFieldSolution<T>,
) -> Result<DecentralizedStrategy<T>> {
    let part = problem.partition();
    let n_dms = part.n_dms();
    let grid = *problem.grid();
    let nodes = grid.n_nodes();

    let mut gains = Vec::with_capacity(n_dms);
    let mut offsets = Vec::with_capacity(n_dms);
    for i in 0..n_dms {
        gains.push(riccati.per_dm[i].gain.clone());
        let di = part.decision_range(i);
        let mut off_nodes = Vec::with_capacity(nodes);
        for k in 0..nodes {
            let r_full = problem.r().node(k);
            let b_full = problem.b().node(k);
            let r_ii = r_full
                .view((di.start, di.start), (di.len(), di.len()))
                .into_owned();
            // B^(i)' r^i + sum_{j != i} R_ij u_bar^j
            let mut aff = b_full.columns(di.start, di.len()).transpose() * mean_field.r[i].node(k);
            for j in 0..n_dms {
                if j == i {
                    continue;
                }
                let dj = part.decision_range(j);
                let r_ij = r_full
                    .view((di.start, dj.start), (di.len(), dj.len()))
                    .into_owned();
                aff.gemv(T::one(), &r_ij, mean_field.u_bar[j].node(k), T::one());
            }
            let solved =
                lu_solve_vec(&r_ii, &aff).ok_or(Error::SingularCoupling { node: k })?;
            off_nodes.push(-solved);
        }
        offsets.push(VectorTrajectory::from_nodes(grid, off_nodes)?);
    }

    Ok(DecentralizedStrategy {
        riccati,
        mean_field,
        gains,
        offsets,
    })
}

/// Centralized view of an `N = 1` decentralized strategy (same affine map).
pub fn as_centralized<T: Scalar>(strategy: &DecentralizedStrategy<T>) -> CentralizedStrategy<T> {
    debug_assert_eq!(strategy.n_dms(), 1);
    CentralizedStrategy {
        gain: strategy.gains[0].clone(),
        feed_forward: Some(strategy.offsets[0].clone()),
    }
}
