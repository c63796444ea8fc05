//! Problem files: the JSON schema consumed by the CLI and other front ends.
//!
//! ```json
//! {
//!   "horizon": 1.0,
//!   "n_steps": 400,
//!   "partition": {"state_dims": [1, 1], "decision_dims": [1, 1], "noise_dims": [1, 1]},
//!   "matrices": {"A": [[...]], "B": [[...]], "G": [[...]], "H": [[...]],
//!                "R": [[...]], "M_T": [[...]]},
//!   "x0": {"mean": [...], "cov": [[...]]}
//! }
//! ```
//!
//! Matrices are row-major nested arrays. A time-varying coefficient is an
//! array of per-node matrices of length `n_steps + 1`; a constant matrix is
//! broadcast across the grid. The optional normal-form fields `b`, `F`, `E`,
//! `m`, `N_T`, `kappa`, `s` turn the file into a normal-form problem.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{MatrixTrajectory, TimeGrid, VectorTrajectory};
use crate::problem::{DmPartition, LqfProblem, NfProblem};
use crate::scalar::Scalar;

/// Constant or per-node matrix data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixEntry {
    Constant(Vec<Vec<f64>>),
    Varying(Vec<Vec<Vec<f64>>>),
}

/// Constant or per-node vector data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorEntry {
    Constant(Vec<f64>),
    Varying(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub state_dims: Vec<usize>,
    pub decision_dims: Vec<usize>,
    pub noise_dims: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatricesSpec {
    #[serde(rename = "A")]
    pub a: MatrixEntry,
    #[serde(rename = "B")]
    pub b: MatrixEntry,
    #[serde(rename = "G")]
    pub g: MatrixEntry,
    #[serde(rename = "H")]
    pub h: MatrixEntry,
    #[serde(rename = "R")]
    pub r: MatrixEntry,
    #[serde(rename = "M_T")]
    pub m_t: Vec<Vec<f64>>,
    #[serde(rename = "b", default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<VectorEntry>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub state_lin: Option<VectorEntry>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub cross: Option<MatrixEntry>,
    #[serde(rename = "m", default, skip_serializing_if = "Option::is_none")]
    pub control_lin: Option<VectorEntry>,
    #[serde(rename = "N_T", default, skip_serializing_if = "Option::is_none")]
    pub term_lin: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialSpec {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// On-disk problem description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub horizon: f64,
    pub n_steps: usize,
    pub partition: PartitionSpec,
    pub matrices: MatricesSpec,
    pub x0: InitialSpec,
}

/// A problem loaded from a file: plain linear-quadratic or normal form.
#[derive(Debug, Clone)]
pub enum LoadedProblem<T: Scalar> {
    Lqf(LqfProblem<T>),
    Nf(NfProblem<T>),
}

impl<T: Scalar> LoadedProblem<T> {
    /// The linear-quadratic core either way.
    pub fn lqf(&self) -> &LqfProblem<T> {
        match self {
            LoadedProblem::Lqf(p) => p,
            LoadedProblem::Nf(p) => p.lqf(),
        }
    }
}

fn mat_from_rows<T: Scalar>(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<T>> {
    if rows.is_empty() {
        return Err(Error::Config {
            what: format!("matrix `{field}` has no rows"),
        });
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch {
            field: field.into(),
            expected: format!("rectangular rows of width {cols}"),
            found: "ragged or empty rows".into(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| {
        T::lit(rows[i][j])
    }))
}

fn vec_from<T: Scalar>(values: &[f64]) -> DVector<T> {
    DVector::from_fn(values.len(), |i, _| T::lit(values[i]))
}

impl MatrixEntry {
    fn build<T: Scalar>(&self, field: &str, grid: TimeGrid<T>) -> Result<MatrixTrajectory<T>> {
        match self {
            MatrixEntry::Constant(rows) => {
                MatrixTrajectory::constant(grid, mat_from_rows(field, rows)?)
            }
            MatrixEntry::Varying(per_node) => {
                let nodes = per_node
                    .iter()
                    .map(|rows| mat_from_rows(field, rows))
                    .collect::<Result<Vec<_>>>()?;
                MatrixTrajectory::from_nodes(grid, nodes)
            }
        }
    }
}

impl VectorEntry {
    fn build<T: Scalar>(&self, grid: TimeGrid<T>) -> Result<VectorTrajectory<T>> {
        match self {
            VectorEntry::Constant(v) => VectorTrajectory::constant(grid, vec_from(v)),
            VectorEntry::Varying(per_node) => VectorTrajectory::from_nodes(
                grid,
                per_node.iter().map(|v| vec_from(v)).collect(),
            ),
        }
    }
}

impl ProblemFile {
    /// Parses a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config {
            what: format!("problem file: {e}"),
        })
    }

    pub fn to_json(&self) -> String {
        // Route through a Value so keys are emitted sorted.
        let value = serde_json::to_value(self).expect("problem file serializes");
        serde_json::to_string_pretty(&value).expect("problem file serializes")
    }

    /// Validates and builds the problem at the requested scalar type.
    pub fn build<T: Scalar>(&self) -> Result<LoadedProblem<T>> {
        let grid = TimeGrid::new(T::lit(self.horizon), self.n_steps)?;
        let partition = DmPartition::new(
            self.partition.state_dims.clone(),
            self.partition.decision_dims.clone(),
            self.partition.noise_dims.clone(),
        )?;
        let (n, d) = (partition.n(), partition.d());
        let lqf = LqfProblem::new(
            grid,
            self.matrices.a.build("A", grid)?,
            self.matrices.b.build("B", grid)?,
            self.matrices.g.build("G", grid)?,
            self.matrices.h.build("H", grid)?,
            self.matrices.r.build("R", grid)?,
            mat_from_rows("M_T", &self.matrices.m_t)?,
            vec_from(&self.x0.mean),
            mat_from_rows("x0.cov", &self.x0.cov)?,
            partition,
        )?;

        let has_nf = self.matrices.drift.is_some()
            || self.matrices.state_lin.is_some()
            || self.matrices.cross.is_some()
            || self.matrices.control_lin.is_some()
            || self.matrices.term_lin.is_some()
            || self.matrices.kappa.is_some()
            || self.matrices.s.is_some();
        if !has_nf {
            return Ok(LoadedProblem::Lqf(lqf));
        }

        let drift = match &self.matrices.drift {
            Some(v) => v.build(grid)?,
            None => VectorTrajectory::zeros(grid, n),
        };
        let state_lin = match &self.matrices.state_lin {
            Some(v) => v.build(grid)?,
            None => VectorTrajectory::zeros(grid, n),
        };
        let cross = match &self.matrices.cross {
            Some(v) => v.build("E", grid)?,
            None => MatrixTrajectory::zeros(grid, d, n),
        };
        let control_lin = match &self.matrices.control_lin {
            Some(v) => v.build(grid)?,
            None => VectorTrajectory::zeros(grid, d),
        };
        let term_lin = match &self.matrices.term_lin {
            Some(v) => vec_from(v),
            None => DVector::zeros(n),
        };
        let kappa = match &self.matrices.kappa {
            Some(ks) => ks
                .iter()
                .enumerate()
                .map(|(c, rows)| mat_from_rows(&format!("kappa[{c}]"), rows))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        let s_ctrl = match &self.matrices.s {
            Some(ss) => ss
                .iter()
                .enumerate()
                .map(|(c, rows)| mat_from_rows(&format!("s[{c}]"), rows))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        Ok(LoadedProblem::Nf(NfProblem::new(
            lqf,
            drift,
            state_lin,
            cross,
            control_lin,
            term_lin,
            kappa,
            s_ctrl,
        )?))
    }

    /// Describes an `f64` problem with constant coefficients as a file.
    /// Time-varying coefficients are written node by node.
    pub fn from_lqf(problem: &LqfProblem<f64>) -> Self {
        let to_rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect()
        };
        let entry = |traj: &MatrixTrajectory<f64>| -> MatrixEntry {
            let first = traj.node(0);
            if traj.nodes().iter().all(|v| v == first) {
                MatrixEntry::Constant(to_rows(first))
            } else {
                MatrixEntry::Varying(traj.nodes().iter().map(to_rows).collect())
            }
        };
        ProblemFile {
            horizon: problem.grid().horizon(),
            n_steps: problem.grid().n_steps(),
            partition: PartitionSpec {
                state_dims: problem.partition().state_dims().to_vec(),
                decision_dims: problem.partition().decision_dims().to_vec(),
                noise_dims: problem.partition().noise_dims().to_vec(),
            },
            matrices: MatricesSpec {
                a: entry(problem.a()),
                b: entry(problem.b()),
                g: entry(problem.g()),
                h: entry(problem.h()),
                r: entry(problem.r()),
                m_t: to_rows(problem.m_term()),
                drift: None,
                state_lin: None,
                cross: None,
                control_lin: None,
                term_lin: None,
                kappa: None,
                s: None,
            },
            x0: InitialSpec {
                mean: problem.x0_mean().iter().copied().collect(),
                cov: to_rows(problem.x0_cov()),
            },
        }
    }
}
