//! Optimality certificates.
//!
//! Three independent checks back the solvers:
//! - conditional stationarity: along simulated paths, each DM's conditional
//!   Hamiltonian gradient `R_ii u^i + B^(i)' (K^i x_hat^i + r^i) +
//!   sum_{j!=i} R_ij u_bar^j` must vanish; this is evaluated in closed form
//!   through the affine representation of the conditional adjoint, with a
//!   Monte Carlo regression mode as a diagnostic cross-check;
//! - person-by-person optimality: central finite differences of the exact
//!   (moment-based) cost under gain and feed-forward perturbations of one DM
//!   at a time;
//! - information ordering: the centralized optimum can never cost more than
//!   the decentralized one.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::centralized::{centralized_gain, solve_riccati_lqf};
use crate::decentralized::{
    make_strategy, solve_all_dm_riccati, solve_mean_field, DecentralizedStrategy, PicardOptions,
};
use crate::error::{Error, Result};
use crate::ode::transition_matrix;
use crate::problem::{LqfProblem, NfProblem};
use crate::rng::SeqStream;
use crate::scalar::Scalar;
use crate::simulation::{compute_cost_exact, ClosedLoopEnsemble, StrategyRef};

/// Hamiltonian of a normal-form problem at node `k`:
/// `<f, psi> + tr(Q' sigma) + l` with `f = A x + b + B u`,
/// `sigma = [kappa_c x + s_c u]_c + G` and the quadratic running cost.
pub fn hamiltonian<T: Scalar>(
    problem: &NfProblem<T>,
    k: usize,
    x: &DVector<T>,
    psi: &DVector<T>,
    q: &DMatrix<T>,
    u: &DVector<T>,
) -> T {
    let lqf = problem.lqf();
    let half = T::lit(0.5);
    // drift inner product
    let mut f = problem.drift().node(k).clone();
    f.gemv(T::one(), lqf.a().node(k), x, T::one());
    f.gemv(T::one(), lqf.b().node(k), u, T::one());
    let mut acc = f.dot(psi);
    // diffusion trace: tr(Q' sigma)
    let g = lqf.g().node(k);
    let kappa = problem.kappa();
    let s_ctrl = problem.s_ctrl();
    for c in 0..lqf.m() {
        let mut col = g.column(c).into_owned();
        if !kappa.is_empty() {
            col.gemv(T::one(), &kappa[c], x, T::one());
        }
        if !s_ctrl.is_empty() {
            col.gemv(T::one(), &s_ctrl[c], u, T::one());
        }
        acc += q.column(c).dot(&col);
    }
    // running cost
    let hx = lqf.h().node(k) * x;
    let ru = lqf.r().node(k) * u;
    let ex = problem.cross().node(k) * x;
    acc += half * (x.dot(&hx) + u.dot(&ru));
    acc += x.dot(problem.state_lin().node(k));
    acc += u.dot(&ex);
    acc += u.dot(problem.control_lin().node(k));
    acc
}

/// Gradient of the Hamiltonian in the decision variable:
/// `B' psi + R u + E x + m + sum_c s_c' Q^(c)`.
pub fn hamiltonian_gradient_u<T: Scalar>(
    problem: &NfProblem<T>,
    k: usize,
    x: &DVector<T>,
    psi: &DVector<T>,
    q: &DMatrix<T>,
    u: &DVector<T>,
) -> DVector<T> {
    let lqf = problem.lqf();
    let mut grad = lqf.b().node(k).transpose() * psi;
    grad.gemv(T::one(), lqf.r().node(k), u, T::one());
    grad.gemv(T::one(), problem.cross().node(k), x, T::one());
    grad += problem.control_lin().node(k);
    for (c, s_c) in problem.s_ctrl().iter().enumerate() {
        let qc = q.column(c).into_owned();
        grad.gemv(T::one(), &s_c.transpose(), &qc, T::one());
    }
    grad
}

/// How a stationarity residual was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StationarityMethod {
    ClosedForm,
    Regression,
}

/// Per-DM conditional-gradient residuals along simulated paths.
#[derive(Debug, Clone, Serialize)]
pub struct StationarityReport {
    pub method: StationarityMethod,
    /// Max residual sup-norm per DM over all paths and nodes.
    pub per_dm_residual: Vec<f64>,
    pub max_residual: f64,
    pub n_paths: usize,
}

/// Closed-form conditional stationarity certificate.
///
/// `reference` carries the kernels, offsets and mean strategies of the
/// team-optimal representation; `ensemble` holds paths simulated under the
/// strategy being checked (possibly a detuned one). For solver-produced
/// strategies the residual vanishes to rounding.
pub fn check_stationarity_closed_form<T: Scalar>(
    problem: &LqfProblem<T>,
    reference: &DecentralizedStrategy<T>,
    ensemble: &ClosedLoopEnsemble<T>,
) -> Result<StationarityReport> {
    let part = problem.partition();
    let n_dms = part.n_dms();
    if ensemble.n_filters != n_dms {
        return Err(Error::DimensionMismatch {
            field: "ensemble".into(),
            expected: format!("{n_dms} filters"),
            found: format!("{}", ensemble.n_filters),
        });
    }
    let nodes = problem.grid().n_nodes();
    let mut per_dm = vec![T::zero(); n_dms];
    for p in 0..ensemble.n_paths() {
        for k in 0..nodes {
            let r_full = problem.r().node(k);
            let b_full = problem.b().node(k);
            for i in 0..n_dms {
                let di = part.decision_range(i);
                let x_hat = ensemble.filter_state(p, i, k);
                let u_i = ensemble.control_dm(p, i, k);
                // conditional adjoint: K^i x_hat + r^i
                let mut psi_i = reference.mean_field.r[i].node(k).clone();
                psi_i.gemv(
                    T::one(),
                    reference.riccati.per_dm[i].k.node(k),
                    &x_hat,
                    T::one(),
                );
                let b_i = b_full.columns(di.start, di.len());
                let mut res = b_i.transpose() * psi_i;
                let r_ii = r_full
                    .view((di.start, di.start), (di.len(), di.len()))
                    .into_owned();
                res.gemv(T::one(), &r_ii, &u_i, T::one());
                for j in 0..n_dms {
                    if j == i {
                        continue;
                    }
                    let dj = part.decision_range(j);
                    let r_ij = r_full
                        .view((di.start, dj.start), (di.len(), dj.len()))
                        .into_owned();
                    res.gemv(
                        T::one(),
                        &r_ij,
                        reference.mean_field.u_bar[j].node(k),
                        T::one(),
                    );
                }
                per_dm[i] = per_dm[i].max(res.abs().max());
            }
        }
    }
    let max = per_dm.iter().copied().fold(T::zero(), |a, b| a.max(b));
    Ok(StationarityReport {
        method: StationarityMethod::ClosedForm,
        per_dm_residual: per_dm.iter().map(|v| v.as_f64()).collect(),
        max_residual: max.as_f64(),
        n_paths: ensemble.n_paths(),
    })
}

/// Monte Carlo diagnostic for the conditional-expectation interpretation.
///
/// For each DM and a subsample of nodes, the raw backward cost functional
/// `Phi'(T,t) M_T x(T) + int_t^T Phi'(s,t) H x(s) ds` is accumulated along
/// each path; its conditional mean given the DM's information is estimated
/// by least-squares regression on polynomials in the filter state up to
/// degree two, and substituted into the conditional gradient. The residual
/// carries sampling noise of order `1/sqrt(paths)`; it validates the
/// interpretation, not the solver tolerance.
pub fn check_stationarity_regression<T: Scalar>(
    problem: &LqfProblem<T>,
    ensemble: &ClosedLoopEnsemble<T>,
    node_stride: usize,
) -> Result<StationarityReport> {
    let part = problem.partition();
    let n_dms = part.n_dms();
    let n = problem.n();
    let nodes = problem.grid().n_nodes();
    let steps = problem.grid().n_steps();
    let h = problem.grid().h();
    let n_paths = ensemble.n_paths();
    if ensemble.n_filters != n_dms {
        return Err(Error::DimensionMismatch {
            field: "ensemble".into(),
            expected: format!("{n_dms} filters"),
            found: format!("{}", ensemble.n_filters),
        });
    }

    // One-step transition factors of A', reused by every path.
    let mut phi_step = Vec::with_capacity(steps);
    for k in 0..steps {
        phi_step.push(transition_matrix(problem.a(), k, k + 1)?.transpose());
    }

    // Backward accumulation of the raw adjoint functional per path.
    let mut raw: Vec<Vec<DVector<T>>> = Vec::with_capacity(n_paths);
    for p in 0..n_paths {
        let mut vals = vec![DVector::<T>::zeros(n); nodes];
        let x_t = ensemble.state(p, steps);
        vals[steps] = problem.m_term() * x_t;
        for k in (0..steps).rev() {
            let hx_k = problem.h().node(k) * ensemble.state(p, k);
            let hx_k1 = problem.h().node(k + 1) * ensemble.state(p, k + 1);
            // trapezoid: Phi'(k+1,k) (Y_{k+1} + h/2 Hx_{k+1}) + h/2 Hx_k
            let mut carry = vals[k + 1].clone();
            carry.axpy(h * T::lit(0.5), &hx_k1, T::one());
            let mut y = &phi_step[k] * carry;
            y.axpy(h * T::lit(0.5), &hx_k, T::one());
            vals[k] = y;
        }
        raw.push(vals);
    }

    let stride = node_stride.max(1);
    let mut per_dm = vec![T::zero(); n_dms];
    for i in 0..n_dms {
        let di = part.decision_range(i);
        let basis_dim = 1 + n + n * (n + 1) / 2;
        for k in (0..nodes).step_by(stride) {
            let r_full = problem.r().node(k);
            let b_full = problem.b().node(k);
            let b_i = b_full.columns(di.start, di.len()).into_owned();
            let r_ii = r_full
                .view((di.start, di.start), (di.len(), di.len()))
                .into_owned();
            // samples of the unconditional gradient contribution
            let mut design = DMatrix::<T>::zeros(n_paths, basis_dim);
            let mut target = DMatrix::<T>::zeros(n_paths, di.len());
            for p in 0..n_paths {
                let x_hat = ensemble.filter_state(p, i, k);
                let mut col = 0;
                design[(p, col)] = T::one();
                col += 1;
                for a in 0..n {
                    design[(p, col)] = x_hat[a];
                    col += 1;
                }
                for a in 0..n {
                    for b in a..n {
                        design[(p, col)] = x_hat[a] * x_hat[b];
                        col += 1;
                    }
                }
                let mut sample = b_i.transpose() * &raw[p][k];
                sample.gemv(T::one(), &r_ii, &ensemble.control_dm(p, i, k), T::one());
                for j in 0..n_dms {
                    if j == i {
                        continue;
                    }
                    let dj = part.decision_range(j);
                    let r_ij = r_full
                        .view((di.start, dj.start), (di.len(), dj.len()))
                        .into_owned();
                    // the other DM's realized action stands in for its mean
                    sample.gemv(T::one(), &r_ij, &ensemble.control_dm(p, j, k), T::one());
                }
                target.row_mut(p).copy_from(&sample.transpose());
            }
            // least squares fit of the conditional gradient
            let svd = design.svd(true, true);
            let coef = svd
                .solve(&target, T::lit(1e-12))
                .map_err(|_| Error::Precondition {
                    what: "regression design matrix is degenerate".into(),
                })?;
            // residual: fitted conditional gradient at the sample points
            let fitted = {
                let mut design2 = DMatrix::<T>::zeros(n_paths, basis_dim);
                for p in 0..n_paths {
                    let x_hat = ensemble.filter_state(p, i, k);
                    let mut col = 0;
                    design2[(p, col)] = T::one();
                    col += 1;
                    for a in 0..n {
                        design2[(p, col)] = x_hat[a];
                        col += 1;
                    }
                    for a in 0..n {
                        for b in a..n {
                            design2[(p, col)] = x_hat[a] * x_hat[b];
                            col += 1;
                        }
                    }
                }
                design2 * &coef
            };
            per_dm[i] = per_dm[i].max(fitted.abs().max());
        }
    }
    let max = per_dm.iter().copied().fold(T::zero(), |a, b| a.max(b));
    Ok(StationarityReport {
        method: StationarityMethod::Regression,
        per_dm_residual: per_dm.iter().map(|v| v.as_f64()).collect(),
        max_residual: max.as_f64(),
        n_paths,
    })
}

/// Finite-difference person-by-person derivatives for one DM direction.
#[derive(Debug, Clone, Serialize)]
pub struct DmPbpReport {
    pub dm: usize,
    /// Central first differences of the exact cost, one per (direction, eps).
    pub first_derivatives: Vec<f64>,
    /// Central second differences, same order.
    pub second_derivatives: Vec<f64>,
}

/// Person-by-person optimality certificate.
#[derive(Debug, Clone, Serialize)]
pub struct PbpReport {
    pub per_dm: Vec<DmPbpReport>,
    pub max_abs_first: f64,
    pub min_second: f64,
    pub n_directions: usize,
    pub eps: Vec<f64>,
}

/// Which part of a DM's affine map the perturbation directions act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PbpFamily {
    /// Random gain and feed-forward increments together.
    GainAndOffset,
    /// Gain increments only.
    GainOnly,
    /// Feed-forward increments only.
    OffsetOnly,
}

/// Perturbs one DM's affine map by `delta` times a fixed direction
/// (gain increment `gamma` on the filter state, feed-forward increment `c`).
fn perturbed_strategy<T: Scalar>(
    base: &DecentralizedStrategy<T>,
    dm: usize,
    gamma: &DMatrix<T>,
    c_dir: &DVector<T>,
    delta: T,
) -> DecentralizedStrategy<T> {
    let mut out = base.clone();
    let nodes = out.gains[dm].grid().n_nodes();
    for k in 0..nodes {
        let mut g = out.gains[dm].node(k).clone();
        g.zip_apply(gamma, |s, o| *s += delta * o);
        out.gains[dm].node_mut(k).copy_from(&g);
        let mut o = out.offsets[dm].node(k).clone();
        o.axpy(delta, c_dir, T::one());
        out.offsets[dm].node_mut(k).copy_from(&o);
    }
    out
}

/// First- and second-difference test of unilateral deviations.
///
/// Directions are seeded standard-normal gain/feed-forward increments; the
/// cost is the deterministic moment-based exact cost, so the differences
/// carry no Monte Carlo noise.
pub fn check_pbp_optimality<T: Scalar>(
    problem: &LqfProblem<T>,
    strategy: &DecentralizedStrategy<T>,
    eps_list: &[T],
    n_directions: usize,
    seed: u64,
    family: PbpFamily,
) -> Result<PbpReport> {
    if eps_list.is_empty() || n_directions == 0 {
        return Err(Error::Config {
            what: "PBP check needs at least one eps and one direction".into(),
        });
    }
    let part = problem.partition();
    let n = problem.n();
    let j0 = compute_cost_exact(problem, StrategyRef::Decentralized(strategy))?;
    if !j0.is_finite_scalar() {
        return Err(Error::IntegrationDiverged { node: 0 });
    }
    let mut rng = SeqStream::new(seed ^ 0x70627064);
    let mut per_dm = Vec::with_capacity(part.n_dms());
    let mut max_abs_first = T::zero();
    let mut min_second = T::lit(f64::INFINITY);
    for dm in 0..part.n_dms() {
        let d_i = part.decision_dims()[dm];
        let mut firsts = Vec::new();
        let mut seconds = Vec::new();
        for _ in 0..n_directions {
            let mut gamma = DMatrix::from_fn(d_i, n, |_, _| T::lit(rng.next_normal()));
            let mut c_dir = DVector::from_fn(d_i, |_, _| T::lit(rng.next_normal()));
            match family {
                PbpFamily::GainAndOffset => {}
                PbpFamily::GainOnly => c_dir.fill(T::zero()),
                PbpFamily::OffsetOnly => gamma.fill(T::zero()),
            }
            for &eps in eps_list {
                let plus = perturbed_strategy(strategy, dm, &gamma, &c_dir, eps);
                let minus = perturbed_strategy(strategy, dm, &gamma, &c_dir, -eps);
                let j_plus = compute_cost_exact(problem, StrategyRef::Decentralized(&plus))?;
                let j_minus = compute_cost_exact(problem, StrategyRef::Decentralized(&minus))?;
                if !j_plus.is_finite_scalar() || !j_minus.is_finite_scalar() {
                    return Err(Error::IntegrationDiverged { node: 0 });
                }
                let two = T::lit(2.0);
                let first = (j_plus - j_minus) / (two * eps);
                let second = (j_plus - two * j0 + j_minus) / (eps * eps);
                max_abs_first = max_abs_first.max(first.abs());
                min_second = min_second.min(second);
                firsts.push(first.as_f64());
                seconds.push(second.as_f64());
            }
        }
        per_dm.push(DmPbpReport {
            dm,
            first_derivatives: firsts,
            second_derivatives: seconds,
        });
    }
    Ok(PbpReport {
        per_dm,
        max_abs_first: max_abs_first.as_f64(),
        min_second: min_second.as_f64(),
        n_directions,
        eps: eps_list.iter().map(|e| e.as_f64()).collect(),
    })
}

/// Exact costs of both information structures on the same problem.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub j_centralized: f64,
    pub j_decentralized: f64,
    pub gap: f64,
    pub gap_relative: f64,
    pub picard_iterations: usize,
}

/// Solves both structures and certifies the ordering
/// `J_centralized <= J_decentralized + 1e-8`. A violated ordering is a
/// solver bug, reported as an error rather than a report.
pub fn compare_information_structures<T: Scalar>(
    problem: &LqfProblem<T>,
    opts: &PicardOptions<T>,
) -> Result<ComparisonReport> {
    let central = solve_riccati_lqf(problem)?;
    let central_strategy = centralized_gain(&central);
    let j_c = compute_cost_exact(problem, StrategyRef::Centralized(&central_strategy))?;

    let set = solve_all_dm_riccati(problem)?;
    let mf = solve_mean_field(problem, &set, opts)?;
    let iterations = mf.iterations;
    let strategy = make_strategy(problem, set, mf)?;
    let j_d = compute_cost_exact(problem, StrategyRef::Decentralized(&strategy))?;

    if j_c > j_d + T::lit(1e-8) {
        return Err(Error::CostOrdering {
            centralized: j_c.as_f64(),
            decentralized: j_d.as_f64(),
        });
    }
    let gap = j_d - j_c;
    Ok(ComparisonReport {
        j_centralized: j_c.as_f64(),
        j_decentralized: j_d.as_f64(),
        gap: gap.as_f64(),
        gap_relative: if j_c != T::zero() {
            (gap / j_c).as_f64()
        } else {
            0.0
        },
        picard_iterations: iterations,
    })
}

/// Detunes a strategy by scaling or shifting one DM's kernel; used by the
/// negative-control fixtures in the verification suite.
pub fn detune_kernel<T: Scalar>(
    problem: &LqfProblem<T>,
    strategy: &DecentralizedStrategy<T>,
    dm: usize,
    scale: T,
    shift: T,
) -> Result<DecentralizedStrategy<T>> {
    let part = problem.partition();
    let di = part.decision_range(dm);
    let mut out = strategy.clone();
    let nodes = problem.grid().n_nodes();
    for k in 0..nodes {
        let mut kmat = out.riccati.per_dm[dm].k.node(k).clone();
        for v in kmat.iter_mut() {
            *v = *v * scale + shift;
        }
        out.riccati.per_dm[dm].k.node_mut(k).copy_from(&kmat);
        // rebuild the gain from the detuned kernel
        let r_full = problem.r().node(k);
        let b_full = problem.b().node(k);
        let r_ii = r_full
            .view((di.start, di.start), (di.len(), di.len()))
            .into_owned();
        let btk = b_full.columns(di.start, di.len()).transpose() * &kmat;
        let g = crate::linalg::lu_solve(&r_ii, &btk)
            .ok_or(Error::SingularCoupling { node: k })?;
        out.gains[dm].node_mut(k).copy_from(&(-g));
    }
    Ok(out)
}
