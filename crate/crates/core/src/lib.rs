//! Team-optimal strategies for distributed linear-quadratic stochastic
//! differential systems.
//!
//! The crate solves, simulates and verifies both centralized and
//! decentralized (per-decision-maker information) strategies for coupled
//! linear stochastic systems with quadratic pay-off:
//!
//! - deterministic kernels: Riccati sweeps, adjoint operators, transition
//!   matrices and covariance propagation ([`ode`], [`centralized`]);
//! - the decentralized fixed point coupling per-DM Riccati kernels, backward
//!   offsets, the mean state and mean strategies ([`decentralized`]);
//! - Monte Carlo closed-loop simulation with per-DM filters plus exact
//!   moment-based cost evaluation ([`simulation`]);
//! - optimality certificates: conditional stationarity, person-by-person
//!   first-order tests and the centralized/decentralized cost ordering
//!   ([`verification`]).
//!
//! Everything is generic over the [`Scalar`] type; `f64` aliases for the
//! common types are exported at the crate root.

pub mod centralized;
pub mod config;
pub mod decentralized;
pub mod error;
pub mod fixtures;
pub mod grid;
pub mod linalg;
pub mod ode;
pub mod problem;
pub mod rng;
pub mod scalar;
pub mod simulation;
pub mod verification;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` instantiations of the core types.
pub type TimeGrid64 = grid::TimeGrid<f64>;
pub type MatrixTrajectory64 = grid::MatrixTrajectory<f64>;
pub type VectorTrajectory64 = grid::VectorTrajectory<f64>;
pub type LqfProblem64 = problem::LqfProblem<f64>;
pub type NfProblem64 = problem::NfProblem<f64>;
pub type RiccatiSolution64 = centralized::RiccatiSolution<f64>;
pub type NfSolution64 = centralized::NfSolution<f64>;
pub type AdjointOperators64 = centralized::AdjointOperators<f64>;
pub type CentralizedStrategy64 = centralized::CentralizedStrategy<f64>;
pub type DmRiccatiSet64 = decentralized::DmRiccatiSet<f64>;
pub type MeanFieldSolution64 = decentralized::MeanFieldSolution<f64>;
pub type DecentralizedStrategy64 = decentralized::DecentralizedStrategy<f64>;
pub type PicardOptions64 = decentralized::PicardOptions<f64>;
pub type ClosedLoopEnsemble64 = simulation::ClosedLoopEnsemble<f64>;
