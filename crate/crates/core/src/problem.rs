//! Problem data for linear-quadratic team games.
//!
//! A problem couples `N` subsystems through the drift, the input map and the
//! pay-off. Matrices are stored in augmented form (state stacked over all
//! subsystems) together with the decision-maker partition that defines the
//! block structure. Construction validates dimensions and definiteness, so
//! solvers only ever see well-formed data.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{MatrixTrajectory, TimeGrid, VectorTrajectory};
use crate::linalg::{max_asymmetry, min_symmetric_eigenvalue};
use crate::scalar::Scalar;

/// Eigenvalue floor for "uniformly positive definite".
pub const EPS_PD: f64 = 1e-10;
/// Eigenvalue tolerance for positive semidefiniteness.
pub const EPS_PSD: f64 = 1e-10;

/// Partition of the augmented state, decision and noise spaces over `N`
/// decision makers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DmPartition {
    state_dims: Vec<usize>,
    decision_dims: Vec<usize>,
    noise_dims: Vec<usize>,
    state_offsets: Vec<usize>,
    decision_offsets: Vec<usize>,
    noise_offsets: Vec<usize>,
}

impl DmPartition {
    pub fn new(
        state_dims: Vec<usize>,
        decision_dims: Vec<usize>,
        noise_dims: Vec<usize>,
    ) -> Result<Self> {
        if state_dims.is_empty()
            || state_dims.len() != decision_dims.len()
            || state_dims.len() != noise_dims.len()
        {
            return Err(Error::DimensionMismatch {
                field: "partition".into(),
                expected: "equal, nonzero numbers of state/decision/noise blocks".into(),
                found: format!(
                    "{}/{}/{}",
                    state_dims.len(),
                    decision_dims.len(),
                    noise_dims.len()
                ),
            });
        }
        for (name, dims) in [
            ("state_dims", &state_dims),
            ("decision_dims", &decision_dims),
            ("noise_dims", &noise_dims),
        ] {
            if dims.contains(&0) {
                return Err(Error::DimensionMismatch {
                    field: name.into(),
                    expected: "all positive".into(),
                    found: format!("{dims:?}"),
                });
            }
        }
        let offsets = |dims: &[usize]| {
            let mut off = Vec::with_capacity(dims.len());
            let mut acc = 0;
            for d in dims {
                off.push(acc);
                acc += d;
            }
            off
        };
        Ok(Self {
            state_offsets: offsets(&state_dims),
            decision_offsets: offsets(&decision_dims),
            noise_offsets: offsets(&noise_dims),
            state_dims,
            decision_dims,
            noise_dims,
        })
    }

    /// Number of decision makers.
    pub fn n_dms(&self) -> usize {
        self.state_dims.len()
    }

    /// Total state dimension `n`.
    pub fn n(&self) -> usize {
        self.state_dims.iter().sum()
    }

    /// Total decision dimension `d`.
    pub fn d(&self) -> usize {
        self.decision_dims.iter().sum()
    }

    /// Total noise dimension `m`.
    pub fn m(&self) -> usize {
        self.noise_dims.iter().sum()
    }

    pub fn state_dims(&self) -> &[usize] {
        &self.state_dims
    }

    pub fn decision_dims(&self) -> &[usize] {
        &self.decision_dims
    }

    pub fn noise_dims(&self) -> &[usize] {
        &self.noise_dims
    }

    pub fn state_range(&self, i: usize) -> std::ops::Range<usize> {
        self.state_offsets[i]..self.state_offsets[i] + self.state_dims[i]
    }

    pub fn decision_range(&self, i: usize) -> std::ops::Range<usize> {
        self.decision_offsets[i]..self.decision_offsets[i] + self.decision_dims[i]
    }

    pub fn noise_range(&self, i: usize) -> std::ops::Range<usize> {
        self.noise_offsets[i]..self.noise_offsets[i] + self.noise_dims[i]
    }

    fn check_dm(&self, i: usize) -> Result<()> {
        if i >= self.n_dms() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n_dms(),
            });
        }
        Ok(())
    }
}

fn check_traj_dims<T: Scalar>(
    field: &str,
    traj: &MatrixTrajectory<T>,
    rows: usize,
    cols: usize,
    grid: &TimeGrid<T>,
) -> Result<()> {
    if traj.grid() != grid {
        return Err(Error::DimensionMismatch {
            field: field.into(),
            expected: format!("grid with {} nodes", grid.n_nodes()),
            found: format!("grid with {} nodes", traj.grid().n_nodes()),
        });
    }
    if traj.rows() != rows || traj.cols() != cols {
        return Err(Error::DimensionMismatch {
            field: field.into(),
            expected: format!("{rows}x{cols}"),
            found: format!("{}x{}", traj.rows(), traj.cols()),
        });
    }
    Ok(())
}

fn check_symmetric_pd<T: Scalar>(what: &str, traj: &MatrixTrajectory<T>) -> Result<()> {
    for k in 0..traj.grid().n_nodes() {
        let m = traj.node(k);
        if max_asymmetry(m) > T::lit(1e-9) {
            return Err(Error::Precondition {
                what: format!("{what} must be symmetric (node {k})"),
            });
        }
        let min = min_symmetric_eigenvalue(m);
        if min < T::lit(EPS_PD) {
            return Err(Error::NotPositiveDefinite {
                what: what.into(),
                node: k,
                eigenvalue: min.as_f64(),
            });
        }
    }
    Ok(())
}

fn check_symmetric_psd_traj<T: Scalar>(what: &str, traj: &MatrixTrajectory<T>) -> Result<()> {
    for k in 0..traj.grid().n_nodes() {
        let m = traj.node(k);
        if max_asymmetry(m) > T::lit(1e-9) {
            return Err(Error::Precondition {
                what: format!("{what} must be symmetric (node {k})"),
            });
        }
        let min = min_symmetric_eigenvalue(m);
        if min < -T::lit(EPS_PSD) {
            return Err(Error::NotPsd {
                what: format!("{what} (node {k})"),
                eigenvalue: min.as_f64(),
            });
        }
    }
    Ok(())
}

fn check_symmetric_psd<T: Scalar>(what: &str, m: &DMatrix<T>) -> Result<()> {
    if max_asymmetry(m) > T::lit(1e-9) {
        return Err(Error::Precondition {
            what: format!("{what} must be symmetric"),
        });
    }
    let min = min_symmetric_eigenvalue(m);
    if min < -T::lit(EPS_PSD) {
        return Err(Error::NotPsd {
            what: what.into(),
            eigenvalue: min.as_f64(),
        });
    }
    Ok(())
}

/// Validated linear-quadratic team problem in augmented form.
///
/// Dynamics `dx = (A x + B u) dt + G dW`, pay-off
/// `J = E[ 1/2 int (<x,Hx> + <u,Ru>) dt + 1/2 <x(T), M x(T)> ]`,
/// Gaussian initial state `x(0) ~ (x0_mean, x0_cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqfProblem<T: Scalar> {
    grid: TimeGrid<T>,
    a: MatrixTrajectory<T>,
    b: MatrixTrajectory<T>,
    g: MatrixTrajectory<T>,
    h: MatrixTrajectory<T>,
    r: MatrixTrajectory<T>,
    m_term: DMatrix<T>,
    x0_mean: DVector<T>,
    x0_cov: DMatrix<T>,
    partition: DmPartition,
}

impl<T: Scalar> LqfProblem<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: TimeGrid<T>,
        a: MatrixTrajectory<T>,
        b: MatrixTrajectory<T>,
        g: MatrixTrajectory<T>,
        h: MatrixTrajectory<T>,
        r: MatrixTrajectory<T>,
        m_term: DMatrix<T>,
        x0_mean: DVector<T>,
        x0_cov: DMatrix<T>,
        partition: DmPartition,
    ) -> Result<Self> {
        let problem = Self {
            grid,
            a,
            b,
            g,
            h,
            r,
            m_term,
            x0_mean,
            x0_cov,
            partition,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Convenience constructor broadcasting constant matrices over the grid.
    #[allow(clippy::too_many_arguments)]
    pub fn from_constant(
        grid: TimeGrid<T>,
        a: DMatrix<T>,
        b: DMatrix<T>,
        g: DMatrix<T>,
        h: DMatrix<T>,
        r: DMatrix<T>,
        m_term: DMatrix<T>,
        x0_mean: DVector<T>,
        x0_cov: DMatrix<T>,
        partition: DmPartition,
    ) -> Result<Self> {
        Self::new(
            grid,
            MatrixTrajectory::constant(grid, a)?,
            MatrixTrajectory::constant(grid, b)?,
            MatrixTrajectory::constant(grid, g)?,
            MatrixTrajectory::constant(grid, h)?,
            MatrixTrajectory::constant(grid, r)?,
            m_term,
            x0_mean,
            x0_cov,
            partition,
        )
    }

    /// Re-runs every structural and definiteness check. Idempotent.
    pub fn validate(&self) -> Result<()> {
        let n = self.partition.n();
        let d = self.partition.d();
        let m = self.partition.m();
        check_traj_dims("A", &self.a, n, n, &self.grid)?;
        check_traj_dims("B", &self.b, n, d, &self.grid)?;
        check_traj_dims("G", &self.g, n, m, &self.grid)?;
        check_traj_dims("H", &self.h, n, n, &self.grid)?;
        check_traj_dims("R", &self.r, d, d, &self.grid)?;
        if self.m_term.nrows() != n || self.m_term.ncols() != n {
            return Err(Error::DimensionMismatch {
                field: "M_T".into(),
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", self.m_term.nrows(), self.m_term.ncols()),
            });
        }
        if self.x0_mean.len() != n {
            return Err(Error::DimensionMismatch {
                field: "x0.mean".into(),
                expected: format!("{n}"),
                found: format!("{}", self.x0_mean.len()),
            });
        }
        if self.x0_cov.nrows() != n || self.x0_cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                field: "x0.cov".into(),
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", self.x0_cov.nrows(), self.x0_cov.ncols()),
            });
        }
        check_symmetric_pd("R", &self.r)?;
        check_symmetric_psd_traj("H", &self.h)?;
        check_symmetric_psd("M_T", &self.m_term)?;
        check_symmetric_psd("x0.cov", &self.x0_cov)?;
        // Each subsystem is driven by its own Brownian motion: G must be
        // block diagonal with respect to the partition.
        for i in 0..self.partition.n_dms() {
            for j in 0..self.partition.n_dms() {
                if i == j {
                    continue;
                }
                let rs = self.partition.state_range(i);
                let cs = self.partition.noise_range(j);
                for k in 0..self.grid.n_nodes() {
                    let block = self.g.node(k).view((rs.start, cs.start), (rs.len(), cs.len()));
                    if block.iter().any(|v| *v != T::zero()) {
                        return Err(Error::Precondition {
                            what: format!(
                                "G couples subsystem {i} to noise of subsystem {j} (node {k}); cross-noise blocks must be zero"
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn partition(&self) -> &DmPartition {
        &self.partition
    }

    pub fn n(&self) -> usize {
        self.partition.n()
    }

    pub fn d(&self) -> usize {
        self.partition.d()
    }

    pub fn m(&self) -> usize {
        self.partition.m()
    }

    pub fn n_dms(&self) -> usize {
        self.partition.n_dms()
    }

    pub fn a(&self) -> &MatrixTrajectory<T> {
        &self.a
    }

    pub fn b(&self) -> &MatrixTrajectory<T> {
        &self.b
    }

    pub fn g(&self) -> &MatrixTrajectory<T> {
        &self.g
    }

    pub fn h(&self) -> &MatrixTrajectory<T> {
        &self.h
    }

    pub fn r(&self) -> &MatrixTrajectory<T> {
        &self.r
    }

    pub fn m_term(&self) -> &DMatrix<T> {
        &self.m_term
    }

    pub fn x0_mean(&self) -> &DVector<T> {
        &self.x0_mean
    }

    pub fn x0_cov(&self) -> &DMatrix<T> {
        &self.x0_cov
    }

    /// Input column block `B^(i)` (all rows, DM `i`'s decision columns).
    pub fn b_block(&self, i: usize) -> Result<MatrixTrajectory<T>> {
        self.partition.check_dm(i)?;
        let range = self.partition.decision_range(i);
        let nodes = self
            .b
            .nodes()
            .iter()
            .map(|m| m.columns(range.start, range.len()).into_owned())
            .collect();
        MatrixTrajectory::from_nodes(self.grid, nodes)
    }

    /// Pay-off block `R_ij` (DM `i` rows, DM `j` columns).
    pub fn r_block(&self, i: usize, j: usize) -> Result<MatrixTrajectory<T>> {
        self.partition.check_dm(i)?;
        self.partition.check_dm(j)?;
        let ri = self.partition.decision_range(i);
        let rj = self.partition.decision_range(j);
        let nodes = self
            .r
            .nodes()
            .iter()
            .map(|m| m.view((ri.start, rj.start), (ri.len(), rj.len())).into_owned())
            .collect();
        MatrixTrajectory::from_nodes(self.grid, nodes)
    }

    /// Noise block `G_ii` (DM `i`'s state rows, DM `i`'s noise columns).
    pub fn g_block(&self, i: usize) -> Result<MatrixTrajectory<T>> {
        self.partition.check_dm(i)?;
        let rs = self.partition.state_range(i);
        let rn = self.partition.noise_range(i);
        let nodes = self
            .g
            .nodes()
            .iter()
            .map(|m| m.view((rs.start, rn.start), (rs.len(), rn.len())).into_owned())
            .collect();
        MatrixTrajectory::from_nodes(self.grid, nodes)
    }

    /// All blocks DM `i`'s solvers need: `B^(i)`, `R_ii`, `{R_ij}`, `G_ii`.
    pub fn dm_slice(&self, i: usize) -> Result<DmSlice<T>> {
        self.partition.check_dm(i)?;
        let mut r_cross = Vec::new();
        for j in 0..self.n_dms() {
            if j != i {
                r_cross.push((j, self.r_block(i, j)?));
            }
        }
        Ok(DmSlice {
            dm: i,
            b_i: self.b_block(i)?,
            r_ii: self.r_block(i, i)?,
            r_cross,
            g_ii: self.g_block(i)?,
        })
    }

    /// Scales every off-diagonal partition block of `A`, `B`, `H`, `R`, `M_T`
    /// and `x0.cov` by `rho`; `rho = 0` fully decouples the subsystems.
    pub fn with_coupling_scaled(&self, rho: T) -> Result<Self> {
        let part = &self.partition;
        let scale_state_blocks = |m: &mut DMatrix<T>| {
            for i in 0..part.n_dms() {
                for j in 0..part.n_dms() {
                    if i == j {
                        continue;
                    }
                    let (ri, rj) = (part.state_range(i), part.state_range(j));
                    for r in ri.clone() {
                        for c in rj.clone() {
                            m[(r, c)] *= rho;
                        }
                    }
                }
            }
        };
        let scale_mixed = |m: &mut DMatrix<T>,
                           rows: &dyn Fn(usize) -> std::ops::Range<usize>,
                           cols: &dyn Fn(usize) -> std::ops::Range<usize>| {
            for i in 0..part.n_dms() {
                for j in 0..part.n_dms() {
                    if i == j {
                        continue;
                    }
                    for r in rows(i) {
                        for c in cols(j) {
                            m[(r, c)] *= rho;
                        }
                    }
                }
            }
        };

        let map_traj = |traj: &MatrixTrajectory<T>, f: &dyn Fn(&mut DMatrix<T>)| {
            let nodes = traj
                .nodes()
                .iter()
                .map(|m| {
                    let mut m = m.clone();
                    f(&mut m);
                    m
                })
                .collect();
            MatrixTrajectory::from_nodes(self.grid, nodes)
        };

        let a = map_traj(&self.a, &scale_state_blocks)?;
        let b = map_traj(&self.b, &|m: &mut DMatrix<T>| {
            scale_mixed(m, &|i| part.state_range(i), &|j| part.decision_range(j))
        })?;
        let h = map_traj(&self.h, &scale_state_blocks)?;
        let r = map_traj(&self.r, &|m: &mut DMatrix<T>| {
            scale_mixed(m, &|i| part.decision_range(i), &|j| part.decision_range(j))
        })?;
        let mut m_term = self.m_term.clone();
        scale_state_blocks(&mut m_term);
        let mut x0_cov = self.x0_cov.clone();
        scale_state_blocks(&mut x0_cov);

        Self::new(
            self.grid,
            a,
            b,
            self.g.clone(),
            h,
            r,
            m_term,
            self.x0_mean.clone(),
            x0_cov,
            self.partition.clone(),
        )
    }
}

/// Blocks of the augmented problem seen by one decision maker.
#[derive(Debug, Clone)]
pub struct DmSlice<T: Scalar> {
    pub dm: usize,
    /// `B^(i)`: all state rows, DM `i` decision columns (`n x d_i`).
    pub b_i: MatrixTrajectory<T>,
    /// `R_ii` (`d_i x d_i`).
    pub r_ii: MatrixTrajectory<T>,
    /// Cross pay-off blocks `R_ij`, `j != i`.
    pub r_cross: Vec<(usize, MatrixTrajectory<T>)>,
    /// `G_ii` (`n_i x m_i`).
    pub g_ii: MatrixTrajectory<T>,
}

/// Constant per-subsystem blocks describing coupled dynamics.
///
/// `a[i][j]` is `A_ij` (`n_i x n_j`), `b[i][j]` is `B_ij` (`n_i x d_j`), and
/// `g[i]` is the subsystem's own noise map `G_ii` (`n_i x m_i`). Cross-noise
/// blocks are not representable: each subsystem is driven by its own
/// Brownian motion.
#[derive(Debug, Clone)]
pub struct SubsystemBlocks<T: Scalar> {
    pub a: Vec<Vec<DMatrix<T>>>,
    pub b: Vec<Vec<DMatrix<T>>>,
    pub g: Vec<DMatrix<T>>,
}

/// Cost and initial data accompanying [`SubsystemBlocks`] in
/// [`assemble_augmented`].
#[derive(Debug, Clone)]
pub struct AugmentedCost<T: Scalar> {
    pub grid: TimeGrid<T>,
    pub h: DMatrix<T>,
    pub r: DMatrix<T>,
    pub m_term: DMatrix<T>,
    pub x0_mean: DVector<T>,
    pub x0_cov: DMatrix<T>,
}

/// Stacks per-subsystem blocks into the augmented `A = [A_ij]`,
/// `B = [B^(1) ... B^(N)]` and block-diagonal `G`, and returns the validated
/// problem.
pub fn assemble_augmented<T: Scalar>(
    blocks: &SubsystemBlocks<T>,
    cost: &AugmentedCost<T>,
) -> Result<LqfProblem<T>> {
    let n_dms = blocks.a.len();
    if n_dms == 0 || blocks.b.len() != n_dms || blocks.g.len() != n_dms {
        return Err(Error::DimensionMismatch {
            field: "subsystem blocks".into(),
            expected: "one A-row, B-row and G block per subsystem".into(),
            found: format!("{}/{}/{}", blocks.a.len(), blocks.b.len(), n_dms),
        });
    }
    let state_dims: Vec<usize> = (0..n_dms).map(|i| blocks.a[i][i].nrows()).collect();
    let decision_dims: Vec<usize> = (0..n_dms).map(|j| blocks.b[0][j].ncols()).collect();
    let noise_dims: Vec<usize> = (0..n_dms).map(|i| blocks.g[i].ncols()).collect();
    let partition = DmPartition::new(state_dims.clone(), decision_dims.clone(), noise_dims)?;

    let n = partition.n();
    let d = partition.d();
    let m = partition.m();
    let mut a = DMatrix::<T>::zeros(n, n);
    let mut b = DMatrix::<T>::zeros(n, d);
    let mut g = DMatrix::<T>::zeros(n, m);

    for i in 0..n_dms {
        if blocks.a[i].len() != n_dms || blocks.b[i].len() != n_dms {
            return Err(Error::DimensionMismatch {
                field: format!("subsystem {i} block row"),
                expected: format!("{n_dms} blocks"),
                found: format!("{}/{}", blocks.a[i].len(), blocks.b[i].len()),
            });
        }
        let ri = partition.state_range(i);
        for j in 0..n_dms {
            let a_ij = &blocks.a[i][j];
            let rj = partition.state_range(j);
            if a_ij.nrows() != ri.len() || a_ij.ncols() != rj.len() {
                return Err(Error::DimensionMismatch {
                    field: format!("A_{i}{j}"),
                    expected: format!("{}x{}", ri.len(), rj.len()),
                    found: format!("{}x{}", a_ij.nrows(), a_ij.ncols()),
                });
            }
            a.view_mut((ri.start, rj.start), (ri.len(), rj.len()))
                .copy_from(a_ij);

            let b_ij = &blocks.b[i][j];
            let cj = partition.decision_range(j);
            if b_ij.nrows() != ri.len() || b_ij.ncols() != cj.len() {
                return Err(Error::DimensionMismatch {
                    field: format!("B_{i}{j}"),
                    expected: format!("{}x{}", ri.len(), cj.len()),
                    found: format!("{}x{}", b_ij.nrows(), b_ij.ncols()),
                });
            }
            b.view_mut((ri.start, cj.start), (ri.len(), cj.len()))
                .copy_from(b_ij);
        }
        let g_ii = &blocks.g[i];
        let wi = partition.noise_range(i);
        if g_ii.nrows() != ri.len() {
            return Err(Error::DimensionMismatch {
                field: format!("G_{i}{i}"),
                expected: format!("{} rows", ri.len()),
                found: format!("{} rows", g_ii.nrows()),
            });
        }
        g.view_mut((ri.start, wi.start), (ri.len(), wi.len()))
            .copy_from(g_ii);
    }

    LqfProblem::from_constant(
        cost.grid,
        a,
        b,
        g,
        cost.h.clone(),
        cost.r.clone(),
        cost.m_term.clone(),
        cost.x0_mean.clone(),
        cost.x0_cov.clone(),
        partition,
    )
}

/// Normal-form extension of [`LqfProblem`]: affine drift, bilinear noise and
/// the richer quadratic pay-off
/// `l = 1/2<u,Ru> + 1/2<x,Hx> + <x,F> + <u,Ex> + <u,m>` with terminal
/// `1/2<x,Mx> + <x,N>`.
#[derive(Debug, Clone, PartialEq)]
pub struct NfProblem<T: Scalar> {
    lqf: LqfProblem<T>,
    /// Drift offset `b(t)` (`n`).
    drift: VectorTrajectory<T>,
    /// Linear state cost `F(t)` (`n`).
    state_lin: VectorTrajectory<T>,
    /// Cross cost `E(t)` (`d x n`).
    cross: MatrixTrajectory<T>,
    /// Linear decision cost `m(t)` (`d`).
    control_lin: VectorTrajectory<T>,
    /// Linear terminal cost `N(T)` (`n`).
    term_lin: DVector<T>,
    /// State coefficients of the bilinear noise, one `n x n` matrix per
    /// noise channel (empty means all zero).
    kappa: Vec<DMatrix<T>>,
    /// Decision coefficients of the bilinear noise, one `n x d` matrix per
    /// noise channel (empty means all zero).
    s_ctrl: Vec<DMatrix<T>>,
}

impl<T: Scalar> NfProblem<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lqf: LqfProblem<T>,
        drift: VectorTrajectory<T>,
        state_lin: VectorTrajectory<T>,
        cross: MatrixTrajectory<T>,
        control_lin: VectorTrajectory<T>,
        term_lin: DVector<T>,
        kappa: Vec<DMatrix<T>>,
        s_ctrl: Vec<DMatrix<T>>,
    ) -> Result<Self> {
        let problem = Self {
            lqf,
            drift,
            state_lin,
            cross,
            control_lin,
            term_lin,
            kappa,
            s_ctrl,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Views a plain linear-quadratic problem as normal form with all
    /// extras zero.
    pub fn from_lqf(lqf: LqfProblem<T>) -> Self {
        let grid = *lqf.grid();
        let (n, d) = (lqf.n(), lqf.d());
        Self {
            drift: VectorTrajectory::zeros(grid, n),
            state_lin: VectorTrajectory::zeros(grid, n),
            cross: MatrixTrajectory::zeros(grid, d, n),
            control_lin: VectorTrajectory::zeros(grid, d),
            term_lin: DVector::zeros(n),
            kappa: Vec::new(),
            s_ctrl: Vec::new(),
            lqf,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lqf.validate()?;
        let (n, d, m) = (self.lqf.n(), self.lqf.d(), self.lqf.m());
        let grid = self.lqf.grid();
        let check_vec = |field: &str, traj: &VectorTrajectory<T>, dim: usize| -> Result<()> {
            if traj.grid() != grid || traj.dim() != dim {
                return Err(Error::DimensionMismatch {
                    field: field.into(),
                    expected: format!("{dim} on the problem grid"),
                    found: format!("{}", traj.dim()),
                });
            }
            Ok(())
        };
        check_vec("b", &self.drift, n)?;
        check_vec("F", &self.state_lin, n)?;
        check_vec("m", &self.control_lin, d)?;
        check_traj_dims("E", &self.cross, d, n, grid)?;
        if self.term_lin.len() != n {
            return Err(Error::DimensionMismatch {
                field: "N_T".into(),
                expected: format!("{n}"),
                found: format!("{}", self.term_lin.len()),
            });
        }
        if !self.kappa.is_empty() && self.kappa.len() != m {
            return Err(Error::DimensionMismatch {
                field: "kappa".into(),
                expected: format!("{m} channel matrices (or none)"),
                found: format!("{}", self.kappa.len()),
            });
        }
        if !self.s_ctrl.is_empty() && self.s_ctrl.len() != m {
            return Err(Error::DimensionMismatch {
                field: "s".into(),
                expected: format!("{m} channel matrices (or none)"),
                found: format!("{}", self.s_ctrl.len()),
            });
        }
        for (c, k) in self.kappa.iter().enumerate() {
            if k.nrows() != n || k.ncols() != n {
                return Err(Error::DimensionMismatch {
                    field: format!("kappa[{c}]"),
                    expected: format!("{n}x{n}"),
                    found: format!("{}x{}", k.nrows(), k.ncols()),
                });
            }
        }
        for (c, s) in self.s_ctrl.iter().enumerate() {
            if s.nrows() != n || s.ncols() != d {
                return Err(Error::DimensionMismatch {
                    field: format!("s[{c}]"),
                    expected: format!("{n}x{d}"),
                    found: format!("{}x{}", s.nrows(), s.ncols()),
                });
            }
        }
        Ok(())
    }

    pub fn lqf(&self) -> &LqfProblem<T> {
        &self.lqf
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        self.lqf.grid()
    }

    pub fn drift(&self) -> &VectorTrajectory<T> {
        &self.drift
    }

    pub fn state_lin(&self) -> &VectorTrajectory<T> {
        &self.state_lin
    }

    pub fn cross(&self) -> &MatrixTrajectory<T> {
        &self.cross
    }

    pub fn control_lin(&self) -> &VectorTrajectory<T> {
        &self.control_lin
    }

    pub fn term_lin(&self) -> &DVector<T> {
        &self.term_lin
    }

    pub fn kappa(&self) -> &[DMatrix<T>] {
        &self.kappa
    }

    pub fn s_ctrl(&self) -> &[DMatrix<T>] {
        &self.s_ctrl
    }

    /// True when the cross cost `E` vanishes identically.
    pub fn cross_is_zero(&self) -> bool {
        self.cross.max_abs() == T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn grid() -> TimeGrid<f64> {
        TimeGrid::new(1.0, 4).unwrap()
    }

    fn two_dm() -> DmPartition {
        DmPartition::new(vec![2, 2], vec![1, 1], vec![1, 1]).unwrap()
    }

    fn valid_two_dm_problem() -> LqfProblem<f64> {
        let part = two_dm();
        let n = part.n();
        LqfProblem::from_constant(
            grid(),
            DMatrix::identity(n, n) * -0.5,
            DMatrix::from_fn(n, 2, |i, j| if i == 2 * j { 1.0 } else { 0.0 }),
            DMatrix::from_fn(n, 2, |i, j| if i == 2 * j { 0.3 } else { 0.0 }),
            DMatrix::identity(n, n),
            DMatrix::identity(2, 2),
            DMatrix::identity(n, n),
            DVector::zeros(n),
            DMatrix::identity(n, n) * 0.1,
            part,
        )
        .unwrap()
    }

    #[test]
    fn partition_requires_positive_dims() {
        assert!(DmPartition::new(vec![1, 0], vec![1, 1], vec![1, 1]).is_err());
        assert!(DmPartition::new(vec![1], vec![1, 1], vec![1]).is_err());
        let p = two_dm();
        assert_eq!(p.n(), 4);
        assert_eq!(p.d(), 2);
        assert_eq!(p.state_range(1), 2..4);
        assert_eq!(p.decision_range(1), 1..2);
    }

    #[test]
    fn well_formed_problem_is_accepted() {
        let p = valid_two_dm_problem();
        assert!(p.validate().is_ok());
    }

    #[test]
    fn singular_r_reports_node_and_eigenvalue() {
        let part = two_dm();
        let n = part.n();
        let g = grid();
        // R loses rank at node 3 only.
        let r_nodes: Vec<DMatrix<f64>> = (0..g.n_nodes())
            .map(|k| {
                if k == 3 {
                    dmatrix![1.0, 0.0; 0.0, 0.0]
                } else {
                    DMatrix::identity(2, 2)
                }
            })
            .collect();
        let res = LqfProblem::new(
            g,
            MatrixTrajectory::constant(g, DMatrix::zeros(n, n)).unwrap(),
            MatrixTrajectory::constant(g, DMatrix::zeros(n, 2)).unwrap(),
            MatrixTrajectory::constant(g, DMatrix::zeros(n, 2)).unwrap(),
            MatrixTrajectory::constant(g, DMatrix::zeros(n, n)).unwrap(),
            MatrixTrajectory::from_nodes(g, r_nodes).unwrap(),
            DMatrix::zeros(n, n),
            DVector::zeros(n),
            DMatrix::zeros(n, n),
            part,
        );
        match res {
            Err(Error::NotPositiveDefinite { what, node, .. }) => {
                assert_eq!(what, "R");
                assert_eq!(node, 3);
            }
            other => panic!("expected PD failure, got {other:?}"),
        }
    }

    #[test]
    fn wrong_b_shape_is_rejected() {
        let part = two_dm();
        let n = part.n();
        let res = LqfProblem::from_constant(
            grid(),
            DMatrix::zeros(n, n),
            DMatrix::zeros(n, 3), // d + 1 columns
            DMatrix::zeros(n, 2),
            DMatrix::zeros(n, n),
            DMatrix::identity(2, 2),
            DMatrix::zeros(n, n),
            DVector::zeros(n),
            DMatrix::zeros(n, n),
            part,
        );
        match res {
            Err(Error::DimensionMismatch { field, .. }) => assert_eq!(field, "B"),
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn cross_noise_blocks_are_rejected() {
        let part = two_dm();
        let n = part.n();
        let mut g = DMatrix::<f64>::zeros(n, 2);
        g[(0, 0)] = 0.3;
        g[(2, 1)] = 0.3;
        g[(0, 1)] = 0.1; // subsystem 0 driven by subsystem 1's noise
        let res = LqfProblem::from_constant(
            grid(),
            DMatrix::zeros(n, n),
            DMatrix::zeros(n, 2),
            g,
            DMatrix::zeros(n, n),
            DMatrix::identity(2, 2),
            DMatrix::zeros(n, n),
            DVector::zeros(n),
            DMatrix::zeros(n, n),
            part,
        );
        match res {
            Err(Error::Precondition { what }) => assert!(what.contains("cross-noise")),
            other => panic!("expected cross-noise rejection, got {other:?}"),
        }
    }

    #[test]
    fn dm_slice_views_match_blocks() {
        let p = valid_two_dm_problem();
        let s0 = p.dm_slice(0).unwrap();
        assert_eq!(s0.b_i.cols(), 1);
        assert_eq!(s0.r_ii.node(0)[(0, 0)], 1.0);
        assert_eq!(s0.r_cross.len(), 1);
        assert_eq!(s0.r_cross[0].0, 1);
        // block-diagonal R has zero cross blocks
        assert_eq!(s0.r_cross[0].1.max_abs(), 0.0);
        assert_eq!(s0.g_ii.rows(), 2);
        assert!(p.dm_slice(2).is_err());
    }

    #[test]
    fn slices_round_trip_r_exactly() {
        let part = two_dm();
        let n = part.n();
        let r = dmatrix![2.0, 0.3; 0.3, 1.5];
        let p = LqfProblem::from_constant(
            grid(),
            DMatrix::zeros(n, n),
            DMatrix::zeros(n, 2),
            DMatrix::zeros(n, 2),
            DMatrix::zeros(n, n),
            r.clone(),
            DMatrix::zeros(n, n),
            DVector::zeros(n),
            DMatrix::zeros(n, n),
            part,
        )
        .unwrap();
        let mut rebuilt = DMatrix::<f64>::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let block = p.r_block(i, j).unwrap();
                rebuilt[(i, j)] = block.node(2)[(0, 0)];
            }
        }
        assert_eq!(rebuilt, r);
    }

    #[test]
    fn assemble_decoupled_blocks_is_block_diagonal() {
        let blocks = SubsystemBlocks {
            a: vec![
                vec![dmatrix![-1.0], dmatrix![0.0]],
                vec![dmatrix![0.0], dmatrix![-2.0]],
            ],
            b: vec![
                vec![dmatrix![1.0], dmatrix![0.0]],
                vec![dmatrix![0.0], dmatrix![1.0]],
            ],
            g: vec![dmatrix![0.5], dmatrix![0.4]],
        };
        let cost = AugmentedCost {
            grid: grid(),
            h: DMatrix::identity(2, 2),
            r: DMatrix::identity(2, 2),
            m_term: DMatrix::zeros(2, 2),
            x0_mean: dvector![0.0, 0.0],
            x0_cov: DMatrix::zeros(2, 2),
        };
        let p = assemble_augmented(&blocks, &cost).unwrap();
        assert_eq!(p.a().node(0), &dmatrix![-1.0, 0.0; 0.0, -2.0]);
        assert_eq!(p.b().node(0), &dmatrix![1.0, 0.0; 0.0, 1.0]);
        assert_eq!(p.g().node(0), &dmatrix![0.5, 0.0; 0.0, 0.4]);
    }

    #[test]
    fn assemble_coupled_blocks_stacks_input_columns() {
        // Coupled two-subsystem layout with nonzero A_12 and B_21: the first
        // input column block must stack B_11 over B_21.
        let blocks = SubsystemBlocks {
            a: vec![
                vec![dmatrix![-1.0], dmatrix![0.7]],
                vec![dmatrix![0.0], dmatrix![-2.0]],
            ],
            b: vec![
                vec![dmatrix![1.0], dmatrix![0.0]],
                vec![dmatrix![0.3], dmatrix![1.0]],
            ],
            g: vec![dmatrix![0.5], dmatrix![0.4]],
        };
        let cost = AugmentedCost {
            grid: grid(),
            h: DMatrix::identity(2, 2),
            r: DMatrix::identity(2, 2),
            m_term: DMatrix::zeros(2, 2),
            x0_mean: dvector![0.0, 0.0],
            x0_cov: DMatrix::zeros(2, 2),
        };
        let p = assemble_augmented(&blocks, &cost).unwrap();
        assert_eq!(p.a().node(0)[(0, 1)], 0.7);
        let b1 = p.b_block(0).unwrap();
        assert_eq!(b1.node(0)[(0, 0)], 1.0);
        assert_eq!(b1.node(0)[(1, 0)], 0.3);
    }

    #[test]
    fn assemble_three_dm_chain_preserves_sparsity() {
        // Chain coupling 0-1-2 with A_02 = 0; compare against the matrix
        // assembled by hand.
        let z = dmatrix![0.0];
        let blocks = SubsystemBlocks {
            a: vec![
                vec![dmatrix![-1.0], dmatrix![0.2], z.clone()],
                vec![dmatrix![0.3], dmatrix![-1.5], dmatrix![0.1]],
                vec![z.clone(), dmatrix![0.4], dmatrix![-2.0]],
            ],
            b: vec![
                vec![dmatrix![1.0], z.clone(), z.clone()],
                vec![z.clone(), dmatrix![1.0], z.clone()],
                vec![z.clone(), z.clone(), dmatrix![1.0]],
            ],
            g: vec![dmatrix![0.1], dmatrix![0.1], dmatrix![0.1]],
        };
        let cost = AugmentedCost {
            grid: grid(),
            h: DMatrix::identity(3, 3),
            r: DMatrix::identity(3, 3),
            m_term: DMatrix::zeros(3, 3),
            x0_mean: DVector::zeros(3),
            x0_cov: DMatrix::zeros(3, 3),
        };
        let p = assemble_augmented(&blocks, &cost).unwrap();
        let expected = dmatrix![
            -1.0, 0.2, 0.0;
            0.3, -1.5, 0.1;
            0.0, 0.4, -2.0
        ];
        assert_eq!(p.a().node(0), &expected);
    }

    #[test]
    fn coupling_scale_zero_decouples() {
        let p = valid_two_dm_problem();
        let mut a0 = p.a().node(0).clone();
        a0[(0, 2)] = 0.8;
        a0[(3, 1)] = -0.4;
        let coupled = LqfProblem::new(
            *p.grid(),
            MatrixTrajectory::constant(*p.grid(), a0).unwrap(),
            p.b().clone(),
            p.g().clone(),
            p.h().clone(),
            p.r().clone(),
            p.m_term().clone(),
            p.x0_mean().clone(),
            p.x0_cov().clone(),
            p.partition().clone(),
        )
        .unwrap();
        let dec = coupled.with_coupling_scaled(0.0).unwrap();
        assert_eq!(dec.a().node(0)[(0, 2)], 0.0);
        assert_eq!(dec.a().node(0)[(3, 1)], 0.0);
        assert_eq!(dec.a().node(0)[(0, 0)], coupled.a().node(0)[(0, 0)]);
    }

    #[test]
    fn nf_from_lqf_has_zero_extras() {
        let p = valid_two_dm_problem();
        let nf = NfProblem::from_lqf(p);
        assert!(nf.cross_is_zero());
        assert!(nf.validate().is_ok());
        assert!(nf.kappa().is_empty());
    }
}
