//! Closed-loop simulation and cost evaluation.
//!
//! The true augmented state and every decision maker's filter advance
//! together under Euler-Maruyama on the shared grid. Each filter is driven
//! only by its own Brownian path and its own realized control, with the
//! other DMs' precomputed mean strategies as forcing, so controls are
//! measurable with respect to the right information by construction.
//!
//! Costs come in three flavors:
//! - [`estimate_cost_mc`]: per-path trapezoid quadrature, mean and standard
//!   error across paths (pairwise summation, order-independent);
//! - [`compute_cost_exact`]: the closed loop is linear-Gaussian, so the cost
//!   is a quadratic functional of the stacked mean and covariance; this
//!   integrates the continuous-time moment ODEs with RK4;
//! - [`compute_cost_chain`]: exact expectation of the simulated chain itself
//!   (discrete-time moment recursion plus the same trapezoid weights), which
//!   the Monte Carlo estimate converges to without discretization bias.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::centralized::CentralizedStrategy;
use crate::decentralized::DecentralizedStrategy;
use crate::error::{Error, Result};
use crate::grid::{MatrixTrajectory, TimeGrid, VectorTrajectory};
use crate::linalg::{psd_sqrt, symmetrize};
use crate::problem::LqfProblem;
use crate::rng::NoiseStreams;
use crate::scalar::Scalar;

/// Source of Brownian increments and initial-state normals.
///
/// Implementations must be pure functions of the indices so ensembles are
/// reproducible under any execution order.
pub trait NoiseSource<T: Scalar>: Sync {
    /// Brownian increment for (path, step, channel) over a step of size `h`.
    fn increment(&self, path: usize, step: usize, channel: usize, h: T) -> T;
    /// Standard normal for component `j` of the initial-state draw.
    fn initial(&self, path: usize, j: usize) -> T;
}

/// Counter-based default noise source.
#[derive(Debug, Clone, Copy)]
pub struct CounterNoise {
    streams: NoiseStreams,
}

impl CounterNoise {
    pub fn new(seed: u64) -> Self {
        Self {
            streams: NoiseStreams::new(seed),
        }
    }
}

impl<T: Scalar> NoiseSource<T> for CounterNoise {
    #[inline]
    fn increment(&self, path: usize, step: usize, channel: usize, h: T) -> T {
        h.sqrt() * T::lit(self.streams.normal(path, step, channel))
    }

    #[inline]
    fn initial(&self, path: usize, j: usize) -> T {
        T::lit(self.streams.initial_normal(path, j))
    }
}

/// Either information structure, borrowed for simulation or cost evaluation.
#[derive(Clone, Copy)]
pub enum StrategyRef<'a, T: Scalar> {
    Centralized(&'a CentralizedStrategy<T>),
    Decentralized(&'a DecentralizedStrategy<T>),
}

impl<'a, T: Scalar> StrategyRef<'a, T> {
    fn n_filters(&self) -> usize {
        match self {
            StrategyRef::Centralized(_) => 0,
            StrategyRef::Decentralized(s) => s.n_dms(),
        }
    }
}

/// One simulated path, flat node-major storage.
#[derive(Debug, Clone)]
pub struct PathRecord<T: Scalar> {
    /// Augmented state, `(n_steps + 1) * n`.
    pub x: Vec<T>,
    /// Filter states, `(n_steps + 1) * n_filters * n` (empty when
    /// centralized).
    pub x_hat: Vec<T>,
    /// Stacked controls, `(n_steps + 1) * d`.
    pub u: Vec<T>,
    /// Brownian increments, `n_steps * m`.
    pub dw: Vec<T>,
}

/// Simulated closed-loop ensemble on the problem grid.
#[derive(Debug, Clone)]
pub struct ClosedLoopEnsemble<T: Scalar> {
    pub grid: TimeGrid<T>,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub n_filters: usize,
    pub decision_dims: Vec<usize>,
    pub paths: Vec<PathRecord<T>>,
}

impl<T: Scalar> ClosedLoopEnsemble<T> {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn state(&self, path: usize, node: usize) -> DVector<T> {
        let n = self.n;
        DVector::from_column_slice(&self.paths[path].x[node * n..(node + 1) * n])
    }

    pub fn filter_state(&self, path: usize, dm: usize, node: usize) -> DVector<T> {
        let n = self.n;
        let stride = self.n_filters * n;
        let base = node * stride + dm * n;
        DVector::from_column_slice(&self.paths[path].x_hat[base..base + n])
    }

    /// Stacked control vector at a node.
    pub fn control(&self, path: usize, node: usize) -> DVector<T> {
        let d = self.d;
        DVector::from_column_slice(&self.paths[path].u[node * d..(node + 1) * d])
    }

    /// One DM's control block at a node.
    pub fn control_dm(&self, path: usize, dm: usize, node: usize) -> DVector<T> {
        let off: usize = self.decision_dims[..dm].iter().sum();
        let d_i = self.decision_dims[dm];
        let base = node * self.d + off;
        DVector::from_column_slice(&self.paths[path].u[base..base + d_i])
    }

    pub fn increments(&self, path: usize, step: usize) -> DVector<T> {
        let m = self.m;
        DVector::from_column_slice(&self.paths[path].dw[step * m..(step + 1) * m])
    }
}

/// Simulates the closed loop with the default counter-based noise, paths in
/// parallel.
pub fn simulate_closed_loop<T: Scalar>(
    problem: &LqfProblem<T>,
    strategy: StrategyRef<'_, T>,
    n_paths: usize,
    seed: u64,
) -> Result<ClosedLoopEnsemble<T>> {
    simulate_with(problem, strategy, n_paths, seed, &CounterNoise::new(seed), true)
}

/// Full-control entry point: explicit noise source and execution mode.
/// Serial and concurrent runs produce bit-identical ensembles.
pub fn simulate_with<T: Scalar, N: NoiseSource<T>>(
    problem: &LqfProblem<T>,
    strategy: StrategyRef<'_, T>,
    n_paths: usize,
    seed: u64,
    noise: &N,
    parallel: bool,
) -> Result<ClosedLoopEnsemble<T>> {
    if n_paths == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let ctx = SimContext::build(problem, strategy)?;
    let run = |p: usize| simulate_path(&ctx, noise, p);
    let paths: Result<Vec<PathRecord<T>>> = if parallel {
        (0..n_paths).into_par_iter().map(run).collect()
    } else {
        (0..n_paths).map(run).collect()
    };
    Ok(ClosedLoopEnsemble {
        grid: *problem.grid(),
        seed,
        n: problem.n(),
        d: problem.d(),
        m: problem.m(),
        n_filters: strategy.n_filters(),
        decision_dims: problem.partition().decision_dims().to_vec(),
        paths: paths?,
    })
}

/// Precomputed per-node coefficients for the path loop.
struct SimContext<'a, T: Scalar> {
    problem: &'a LqfProblem<T>,
    strategy: StrategyRef<'a, T>,
    /// Initial-state deviation factor `x0_cov^(1/2)` (spectral).
    sqrt_cov: DMatrix<T>,
    /// Per DM: augmented noise columns of its own channels, per node.
    g_blocks: Vec<Vec<DMatrix<T>>>,
    /// Per DM per node: filter forcing `sum_{j != i} B^(j) u_bar^j`.
    filter_forcing: Vec<Vec<DVector<T>>>,
}

impl<'a, T: Scalar> SimContext<'a, T> {
    fn build(problem: &'a LqfProblem<T>, strategy: StrategyRef<'a, T>) -> Result<Self> {
        let part = problem.partition();
        let nodes = problem.grid().n_nodes();
        let sqrt_cov = psd_sqrt(problem.x0_cov());
        let mut g_blocks = Vec::new();
        let mut filter_forcing = Vec::new();
        if let StrategyRef::Decentralized(ds) = strategy {
            if ds.n_dms() != part.n_dms() {
                return Err(Error::DimensionMismatch {
                    field: "strategy".into(),
                    expected: format!("{} decision makers", part.n_dms()),
                    found: format!("{}", ds.n_dms()),
                });
            }
            for i in 0..part.n_dms() {
                let wr = part.noise_range(i);
                let cols: Vec<DMatrix<T>> = (0..nodes)
                    .map(|k| problem.g().node(k).columns(wr.start, wr.len()).into_owned())
                    .collect();
                g_blocks.push(cols);
                let forcing: Vec<DVector<T>> = (0..nodes)
                    .map(|k| {
                        let b = problem.b().node(k);
                        let mut f = DVector::zeros(problem.n());
                        for j in 0..part.n_dms() {
                            if j == i {
                                continue;
                            }
                            let dj = part.decision_range(j);
                            let bj = b.columns(dj.start, dj.len());
                            f.gemv(T::one(), &bj, ds.mean_field.u_bar[j].node(k), T::one());
                        }
                        f
                    })
                    .collect();
                filter_forcing.push(forcing);
            }
        }
        Ok(Self {
            problem,
            strategy,
            sqrt_cov,
            g_blocks,
            filter_forcing,
        })
    }
}

fn simulate_path<T: Scalar, N: NoiseSource<T>>(
    ctx: &SimContext<'_, T>,
    noise: &N,
    path: usize,
) -> Result<PathRecord<T>> {
    let problem = ctx.problem;
    let grid = problem.grid();
    let part = problem.partition();
    let (n, d, m) = (problem.n(), problem.d(), problem.m());
    let steps = grid.n_steps();
    let h = grid.h();
    let n_filters = ctx.strategy.n_filters();

    let mut rec = PathRecord {
        x: vec![T::zero(); (steps + 1) * n],
        x_hat: vec![T::zero(); (steps + 1) * n_filters * n],
        u: vec![T::zero(); (steps + 1) * d],
        dw: vec![T::zero(); steps * m],
    };

    // x(0) = mean + cov^(1/2) xi, filters start at the mean.
    let xi = DVector::from_fn(n, |j, _| noise.initial(path, j));
    let mut x = problem.x0_mean().clone();
    x.gemv(T::one(), &ctx.sqrt_cov, &xi, T::one());
    let mut x_hat: Vec<DVector<T>> = (0..n_filters)
        .map(|_| problem.x0_mean().clone())
        .collect();

    let mut u = DVector::<T>::zeros(d);
    let mut drift = DVector::<T>::zeros(n);
    let mut dw = DVector::<T>::zeros(m);

    for k in 0..=steps {
        rec.x[k * n..(k + 1) * n].copy_from_slice(x.as_slice());
        for (i, xh) in x_hat.iter().enumerate() {
            let base = k * n_filters * n + i * n;
            rec.x_hat[base..base + n].copy_from_slice(xh.as_slice());
        }

        // Controls at node k from each DM's own information.
        match ctx.strategy {
            StrategyRef::Centralized(cs) => {
                u.copy_from(&cs.control(k, &x));
            }
            StrategyRef::Decentralized(ds) => {
                for i in 0..n_filters {
                    let di = part.decision_range(i);
                    let u_i = ds.control(i, k, &x_hat[i]);
                    u.rows_mut(di.start, di.len()).copy_from(&u_i);
                }
            }
        }
        rec.u[k * d..(k + 1) * d].copy_from_slice(u.as_slice());

        if k == steps {
            break;
        }

        for c in 0..m {
            dw[c] = noise.increment(path, k, c, h);
        }
        rec.dw[k * m..(k + 1) * m].copy_from_slice(dw.as_slice());

        let a_k = problem.a().node(k);
        let b_k = problem.b().node(k);
        let g_k = problem.g().node(k);

        // x <- x + h (A x + B u) + G dW
        drift.gemv(T::one(), a_k, &x, T::zero());
        drift.gemv(T::one(), b_k, &u, T::one());
        x.axpy(h, &drift, T::one());
        x.gemv(T::one(), g_k, &dw, T::one());
        if !x.iter().all(|v| v.is_finite_scalar()) {
            return Err(Error::NonFiniteState { path, node: k + 1 });
        }

        // Filters: x_hat^i <- x_hat^i + h (A x_hat^i + B^(i) u^i
        //          + sum_{j != i} B^(j) u_bar^j) + G^(i) dW^(i)
        for (i, xh) in x_hat.iter_mut().enumerate() {
            let di = part.decision_range(i);
            drift.gemv(T::one(), a_k, xh, T::zero());
            let b_i = b_k.columns(di.start, di.len());
            let u_i = u.rows(di.start, di.len());
            drift.gemv(T::one(), &b_i, &u_i, T::one());
            drift += &ctx.filter_forcing[i][k];
            xh.axpy(h, &drift, T::one());
            let wr = part.noise_range(i);
            let dw_i = dw.rows(wr.start, wr.len());
            xh.gemv(T::one(), &ctx.g_blocks[i][k], &dw_i, T::one());
        }
    }
    Ok(rec)
}

/// Monte Carlo cost statistics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CostReport {
    /// Sample mean of the per-path cost.
    pub j_mc: f64,
    /// Standard error of the mean.
    pub j_se: f64,
    /// Moment-based cost of the continuous closed loop, when evaluated.
    pub j_exact: Option<f64>,
    pub n_paths: usize,
    /// Mean running (integral) part.
    pub running_mc: f64,
    /// Mean terminal part.
    pub terminal_mc: f64,
}

/// Per-path trapezoid quadrature of the quadratic pay-off, reduced by
/// pairwise summation.
pub fn estimate_cost_mc<T: Scalar>(
    ensemble: &ClosedLoopEnsemble<T>,
    problem: &LqfProblem<T>,
) -> Result<CostReport> {
    if ensemble.paths.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let n_paths = ensemble.paths.len();
    let mut running = Vec::with_capacity(n_paths);
    let mut terminal = Vec::with_capacity(n_paths);
    for p in 0..n_paths {
        let (r, t) = path_cost(ensemble, problem, p);
        running.push(r);
        terminal.push(t);
    }
    let totals: Vec<T> = running
        .iter()
        .zip(terminal.iter())
        .map(|(r, t)| *r + *t)
        .collect();
    let np = T::from_count(n_paths);
    let mean = pairwise_sum(&totals) / np;
    let sq: Vec<T> = totals
        .iter()
        .map(|c| {
            let dev = *c - mean;
            dev * dev
        })
        .collect();
    let se = if n_paths > 1 {
        (pairwise_sum(&sq) / (np * (np - T::one()))).sqrt()
    } else {
        T::zero()
    };
    Ok(CostReport {
        j_mc: mean.as_f64(),
        j_se: se.as_f64(),
        j_exact: None,
        n_paths,
        running_mc: (pairwise_sum(&running) / np).as_f64(),
        terminal_mc: (pairwise_sum(&terminal) / np).as_f64(),
    })
}

/// (running, terminal) cost of one stored path.
fn path_cost<T: Scalar>(
    ensemble: &ClosedLoopEnsemble<T>,
    problem: &LqfProblem<T>,
    p: usize,
) -> (T, T) {
    let grid = &ensemble.grid;
    let steps = grid.n_steps();
    let h = grid.h();
    let half = T::lit(0.5);
    let mut running = T::zero();
    for k in 0..=steps {
        let x = ensemble.state(p, k);
        let u = ensemble.control(p, k);
        let hx = problem.h().node(k) * &x;
        let ru = problem.r().node(k) * &u;
        let val = half * (x.dot(&hx) + u.dot(&ru));
        let w = if k == 0 || k == steps { half } else { T::one() };
        running += w * h * val;
    }
    let x_t = ensemble.state(p, steps);
    let mx = problem.m_term() * &x_t;
    (running, half * x_t.dot(&mx))
}

fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        2 => xs[0] + xs[1],
        len => {
            let mid = len / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Stacked linear-Gaussian closed-loop model `dz = (A_cl z + c) dt
/// + G_cl dW`, `u = S z + phi`, shared by both moment-based costs.
struct ClosedLoopModel<T: Scalar> {
    nz: usize,
    a_cl: MatrixTrajectory<T>,
    c: VectorTrajectory<T>,
    g_cl: MatrixTrajectory<T>,
    s_map: MatrixTrajectory<T>,
    phi: VectorTrajectory<T>,
    m0: DVector<T>,
    p0: DMatrix<T>,
}

impl<T: Scalar> ClosedLoopModel<T> {
    fn build(problem: &LqfProblem<T>, strategy: StrategyRef<'_, T>) -> Result<Self> {
        let grid = *problem.grid();
        let part = problem.partition();
        let (n, d, m) = (problem.n(), problem.d(), problem.m());
        let nodes = grid.n_nodes();
        match strategy {
            StrategyRef::Centralized(cs) => {
                let mut a_nodes = Vec::with_capacity(nodes);
                let mut c_nodes = Vec::with_capacity(nodes);
                let mut s_nodes = Vec::with_capacity(nodes);
                let mut phi_nodes = Vec::with_capacity(nodes);
                for k in 0..nodes {
                    let mut a = problem.a().node(k).clone();
                    a.gemm(T::one(), problem.b().node(k), cs.gain.node(k), T::one());
                    a_nodes.push(a);
                    let phi = match &cs.feed_forward {
                        Some(ff) => ff.node(k).clone(),
                        None => DVector::zeros(d),
                    };
                    c_nodes.push(problem.b().node(k) * &phi);
                    s_nodes.push(cs.gain.node(k).clone());
                    phi_nodes.push(phi);
                }
                Ok(Self {
                    nz: n,
                    a_cl: MatrixTrajectory::from_nodes(grid, a_nodes)?,
                    c: VectorTrajectory::from_nodes(grid, c_nodes)?,
                    g_cl: problem.g().clone(),
                    s_map: MatrixTrajectory::from_nodes(grid, s_nodes)?,
                    phi: VectorTrajectory::from_nodes(grid, phi_nodes)?,
                    m0: problem.x0_mean().clone(),
                    p0: problem.x0_cov().clone(),
                })
            }
            StrategyRef::Decentralized(ds) => {
                let n_dms = part.n_dms();
                let nz = (n_dms + 1) * n;
                let block = |i: usize| (i + 1) * n; // start row of filter i
                let mut a_nodes = Vec::with_capacity(nodes);
                let mut c_nodes = Vec::with_capacity(nodes);
                let mut g_nodes = Vec::with_capacity(nodes);
                let mut s_nodes = Vec::with_capacity(nodes);
                let mut phi_nodes = Vec::with_capacity(nodes);
                for k in 0..nodes {
                    let a_k = problem.a().node(k);
                    let b_k = problem.b().node(k);
                    let g_k = problem.g().node(k);
                    let mut a = DMatrix::<T>::zeros(nz, nz);
                    let mut c = DVector::<T>::zeros(nz);
                    let mut g = DMatrix::<T>::zeros(nz, m);
                    let mut s = DMatrix::<T>::zeros(d, nz);
                    let mut phi = DVector::<T>::zeros(d);
                    a.view_mut((0, 0), (n, n)).copy_from(a_k);
                    g.view_mut((0, 0), (n, m)).copy_from(g_k);
                    for i in 0..n_dms {
                        let di = part.decision_range(i);
                        let b_i = b_k.columns(di.start, di.len()).into_owned();
                        let f_i = ds.gains[i].node(k);
                        let phi_i = ds.offsets[i].node(k);
                        let bf = &b_i * f_i;
                        // true state sees every DM's realized control
                        a.view_mut((0, block(i)), (n, n)).copy_from(&bf);
                        c.rows_mut(0, n).gemv(T::one(), &b_i, phi_i, T::one());
                        // filter i: closed loop in its own estimate
                        let mut a_ii = a_k.clone();
                        a_ii += &bf;
                        a.view_mut((block(i), block(i)), (n, n)).copy_from(&a_ii);
                        let mut c_i = &b_i * phi_i;
                        for j in 0..n_dms {
                            if j == i {
                                continue;
                            }
                            let dj = part.decision_range(j);
                            let b_j = b_k.columns(dj.start, dj.len());
                            c_i.gemv(
                                T::one(),
                                &b_j,
                                ds.mean_field.u_bar[j].node(k),
                                T::one(),
                            );
                        }
                        c.rows_mut(block(i), n).copy_from(&c_i);
                        // filter i is driven by its own noise columns only
                        let wr = part.noise_range(i);
                        g.view_mut((block(i), wr.start), (n, wr.len()))
                            .copy_from(&g_k.columns(wr.start, wr.len()));
                        s.view_mut((di.start, block(i)), (di.len(), n))
                            .copy_from(f_i);
                        phi.rows_mut(di.start, di.len()).copy_from(phi_i);
                    }
                    a_nodes.push(a);
                    c_nodes.push(c);
                    g_nodes.push(g);
                    s_nodes.push(s);
                    phi_nodes.push(phi);
                }
                let mut m0 = DVector::<T>::zeros(nz);
                let mut p0 = DMatrix::<T>::zeros(nz, nz);
                for i in 0..=n_dms {
                    m0.rows_mut(i * n, n).copy_from(problem.x0_mean());
                }
                p0.view_mut((0, 0), (n, n)).copy_from(problem.x0_cov());
                Ok(Self {
                    nz,
                    a_cl: MatrixTrajectory::from_nodes(grid, a_nodes)?,
                    c: VectorTrajectory::from_nodes(grid, c_nodes)?,
                    g_cl: MatrixTrajectory::from_nodes(grid, g_nodes)?,
                    s_map: MatrixTrajectory::from_nodes(grid, s_nodes)?,
                    phi: VectorTrajectory::from_nodes(grid, phi_nodes)?,
                    m0,
                    p0,
                })
            }
        }
    }

    /// Expected running cost rate at given stacked moments:
    /// `E[1/2 x'Hx + 1/2 u'Ru]` with `u = S z + phi`.
    #[allow(clippy::too_many_arguments)]
    fn running_rate(
        &self,
        problem: &LqfProblem<T>,
        h_k: &DMatrix<T>,
        r_k: &DMatrix<T>,
        s_k: &DMatrix<T>,
        phi_k: &DVector<T>,
        mean: &DVector<T>,
        cov: &DMatrix<T>,
    ) -> T {
        let n = problem.n();
        let half = T::lit(0.5);
        // state part: tr(H P_xx) + m_x' H m_x
        let mut acc = T::zero();
        for i in 0..n {
            for j in 0..n {
                acc += h_k[(i, j)] * cov[(j, i)];
            }
        }
        let m_x = mean.rows(0, n).into_owned();
        let hm = h_k * &m_x;
        acc += m_x.dot(&hm);
        // control part: tr(R S P S') + (S m + phi)' R (S m + phi)
        let sp = s_k * cov; // d x nz
        let spst = &sp * s_k.transpose(); // d x d
        let dd = r_k.nrows();
        for i in 0..dd {
            for j in 0..dd {
                acc += r_k[(i, j)] * spst[(j, i)];
            }
        }
        let mut su = phi_k.clone();
        su.gemv(T::one(), s_k, mean, T::one());
        let rsu = r_k * &su;
        acc += su.dot(&rsu);
        half * acc
    }

    fn terminal_cost(&self, problem: &LqfProblem<T>, mean: &DVector<T>, cov: &DMatrix<T>) -> T {
        let n = problem.n();
        let half = T::lit(0.5);
        let m_t = problem.m_term();
        let mut acc = T::zero();
        for i in 0..n {
            for j in 0..n {
                acc += m_t[(i, j)] * cov[(j, i)];
            }
        }
        let m_x = mean.rows(0, n).into_owned();
        let mm = m_t * &m_x;
        acc += m_x.dot(&mm);
        half * acc
    }
}

/// Exact cost of the continuous-time closed loop via RK4 moment
/// integration.
pub fn compute_cost_exact<T: Scalar>(
    problem: &LqfProblem<T>,
    strategy: StrategyRef<'_, T>,
) -> Result<T> {
    let model = ClosedLoopModel::build(problem, strategy)?;
    let grid = *problem.grid();
    let nz = model.nz;
    // Stacked state columns: [P | mean | cost]
    let mut state = DMatrix::<T>::zeros(nz, nz + 2);
    state.view_mut((0, 0), (nz, nz)).copy_from(&model.p0);
    state.column_mut(nz).copy_from(&model.m0);

    let mut rhs = |t: T, y: &DMatrix<T>| -> DMatrix<T> {
        let p = y.columns(0, nz).into_owned();
        let mean = y.column(nz).into_owned();
        let a = model.a_cl.eval4(t);
        let c = model.c.eval4(t);
        let g = model.g_cl.eval4(t);
        let s = model.s_map.eval4(t);
        let phi = model.phi.eval4(t);
        let h_k = problem.h().sample(t);
        let r_k = problem.r().sample(t);

        let mut dp = &a * &p;
        dp.gemm(T::one(), &p, &a.transpose(), T::one());
        dp.gemm(T::one(), &g, &g.transpose(), T::one());
        let mut dm = &a * &mean;
        dm += &c;
        let rate = model.running_rate(problem, &h_k, &r_k, &s, &phi, &mean, &p);

        let mut out = DMatrix::<T>::zeros(nz, nz + 2);
        out.columns_mut(0, nz).copy_from(&dp);
        out.column_mut(nz).copy_from(&dm);
        out[(0, nz + 1)] = rate;
        out
    };

    let h = grid.h();
    for k in 0..grid.n_steps() {
        state = crate::ode::rk4_step(&mut rhs, grid.time(k), &state, h);
        let mut p_owned = state.columns(0, nz).into_owned();
        symmetrize(&mut p_owned);
        state.columns_mut(0, nz).copy_from(&p_owned);
        if !state.iter().all(|v| v.is_finite_scalar()) {
            return Err(Error::IntegrationDiverged { node: k + 1 });
        }
    }

    let p_t = state.columns(0, nz).into_owned();
    let mean_t = state.column(nz).into_owned();
    Ok(state[(0, nz + 1)] + model.terminal_cost(problem, &mean_t, &p_t))
}

/// Exact expected cost of the simulated Euler-Maruyama chain: discrete
/// moment recursion plus the same trapezoid weights as the Monte Carlo
/// estimator. `j_mc` converges to this value as paths grow, with no
/// discretization gap.
pub fn compute_cost_chain<T: Scalar>(
    problem: &LqfProblem<T>,
    strategy: StrategyRef<'_, T>,
) -> Result<T> {
    let model = ClosedLoopModel::build(problem, strategy)?;
    let grid = *problem.grid();
    let nz = model.nz;
    let steps = grid.n_steps();
    let h = grid.h();
    let half = T::lit(0.5);

    let mut mean = model.m0.clone();
    let mut cov = model.p0.clone();
    let mut running = T::zero();
    for k in 0..=steps {
        let rate = model.running_rate(
            problem,
            problem.h().node(k),
            problem.r().node(k),
            model.s_map.node(k),
            model.phi.node(k),
            &mean,
            &cov,
        );
        let w = if k == 0 || k == steps { half } else { T::one() };
        running += w * h * rate;
        if k == steps {
            break;
        }
        // z_{k+1} = (I + h A) z_k + h c + G dW
        let mut step_map = DMatrix::<T>::identity(nz, nz);
        step_map.zip_apply(model.a_cl.node(k), |s, a| *s += h * a);
        let mut new_mean = &step_map * &mean;
        new_mean.axpy(h, model.c.node(k), T::one());
        let mut new_cov = &step_map * &cov * step_map.transpose();
        let g = model.g_cl.node(k);
        new_cov.gemm(h, g, &g.transpose(), T::one());
        symmetrize(&mut new_cov);
        mean = new_mean;
        cov = new_cov;
    }
    Ok(running + model.terminal_cost(problem, &mean, &cov))
}

/// Writes the ensemble as CSV: one row per (path, node), every column named,
/// values with 17 significant digits (exact `f64` round-trip). Decision-maker
/// tags in column names are 1-based; component indices are 0-based.
pub fn write_ensemble_csv<T: Scalar, W: std::io::Write>(
    ensemble: &ClosedLoopEnsemble<T>,
    out: &mut W,
) -> std::io::Result<()> {
    let mut header = vec!["path".to_string(), "t".to_string()];
    for j in 0..ensemble.n {
        header.push(format!("x_{j}"));
    }
    for i in 0..ensemble.n_filters {
        for j in 0..ensemble.n {
            header.push(format!("xhat{}_{j}", i + 1));
        }
    }
    let mut col = 0;
    for (i, d_i) in ensemble.decision_dims.iter().enumerate() {
        for j in 0..*d_i {
            header.push(format!("u{}_{j}", i + 1));
            col += 1;
        }
    }
    debug_assert_eq!(col, ensemble.d);
    writeln!(out, "{}", header.join(","))?;

    let nodes = ensemble.grid.n_nodes();
    for p in 0..ensemble.n_paths() {
        let rec = &ensemble.paths[p];
        for k in 0..nodes {
            write!(out, "{p},{:.16e}", ensemble.grid.time(k).as_f64())?;
            for j in 0..ensemble.n {
                write!(out, ",{:.16e}", rec.x[k * ensemble.n + j].as_f64())?;
            }
            let stride = ensemble.n_filters * ensemble.n;
            for j in 0..stride {
                write!(out, ",{:.16e}", rec.x_hat[k * stride + j].as_f64())?;
            }
            for j in 0..ensemble.d {
                write!(out, ",{:.16e}", rec.u[k * ensemble.d + j].as_f64())?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
