//! Output-directory handling and CSV/JSON writers.
//!
//! Reruns never mutate prior outputs: without `--out` a fresh timestamped
//! directory is created under `./runs`; an explicit non-empty `--out`
//! requires `--force`. JSON is pretty-printed with sorted keys; CSV floats
//! carry 17 significant digits so `f64` values round-trip exactly.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::Value;
use teamlq::grid::{MatrixTrajectory, VectorTrajectory};

use crate::errors::CliError;

pub fn resolve_out_dir(
    out: Option<PathBuf>,
    force: bool,
    command: &str,
) -> Result<PathBuf, CliError> {
    match out {
        Some(dir) => {
            if dir.is_dir() {
                let occupied = std::fs::read_dir(&dir)
                    .map_err(|e| CliError::io(&dir, e))?
                    .next()
                    .is_some();
                if occupied && !force {
                    return Err(CliError::usage(format!(
                        "output directory {} is not empty; pass --force to overwrite",
                        dir.display()
                    )));
                }
            }
            std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            Ok(dir)
        }
        None => {
            let nanos = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .expect("clock before epoch")
                .as_nanos();
            let dir = PathBuf::from("runs").join(format!("{command}-{nanos}"));
            std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            Ok(dir)
        }
    }
}

/// Pretty JSON with sorted keys (serde_json maps are ordered).
pub fn pretty(value: &Value) -> String {
    serde_json::to_string_pretty(value).expect("json serializes")
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = pretty(value);
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV of one or more matrix trajectories sharing a grid. Each trajectory
/// contributes columns `<tag>_<row>_<col>`.
pub fn trajectory_csv(parts: &[(&str, &MatrixTrajectory<f64>)]) -> String {
    let grid = parts[0].1.grid();
    let mut header = vec!["node".to_string(), "t".to_string()];
    for (tag, traj) in parts {
        for r in 0..traj.rows() {
            for c in 0..traj.cols() {
                header.push(format!("{tag}_{r}_{c}"));
            }
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for k in 0..grid.n_nodes() {
        let mut row = vec![k.to_string(), fmt(grid.time(k))];
        for (_, traj) in parts {
            let m = traj.node(k);
            for r in 0..traj.rows() {
                for c in 0..traj.cols() {
                    row.push(fmt(m[(r, c)]));
                }
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// CSV of vector trajectories sharing a grid, columns `<tag>_<component>`.
pub fn vectors_csv(parts: &[(String, &VectorTrajectory<f64>)]) -> String {
    let grid = parts[0].1.grid();
    let mut header = vec!["node".to_string(), "t".to_string()];
    for (tag, traj) in parts {
        for j in 0..traj.dim() {
            header.push(format!("{tag}_{j}"));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for k in 0..grid.n_nodes() {
        let mut row = vec![k.to_string(), fmt(grid.time(k))];
        for (_, traj) in parts {
            let v = traj.node(k);
            for j in 0..traj.dim() {
                row.push(fmt(v[j]));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
