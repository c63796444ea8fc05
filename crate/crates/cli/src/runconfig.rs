//! Run configuration: the JSON document driving every subcommand.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use teamlq::config::{LoadedProblem, ProblemFile};
use teamlq::PicardOptions64;

use crate::errors::CliError;

fn default_n_paths() -> usize {
    1000
}

fn default_csv_paths() -> usize {
    100
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSpec {
    #[serde(default = "PicardSpec::default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "PicardSpec::default_tol")]
    pub tol: f64,
    #[serde(default = "PicardSpec::default_damping")]
    pub damping: f64,
}

impl PicardSpec {
    fn default_max_iter() -> usize {
        200
    }
    fn default_tol() -> f64 {
        1e-8
    }
    fn default_damping() -> f64 {
        0.5
    }
}

impl Default for PicardSpec {
    fn default() -> Self {
        Self {
            max_iter: Self::default_max_iter(),
            tol: Self::default_tol(),
            damping: Self::default_damping(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Perturbation sizes for the person-by-person differences.
    #[serde(default = "VerifySpec::default_eps")]
    pub eps: Vec<f64>,
    /// Random directions per decision maker.
    #[serde(default = "VerifySpec::default_directions")]
    pub directions: usize,
    /// Paths simulated for the stationarity checks.
    #[serde(default = "VerifySpec::default_paths")]
    pub paths: usize,
}

impl VerifySpec {
    fn default_eps() -> Vec<f64> {
        vec![1e-3]
    }
    fn default_directions() -> usize {
        10
    }
    fn default_paths() -> usize {
        20
    }
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            eps: Self::default_eps(),
            directions: Self::default_directions(),
            paths: Self::default_paths(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Problem file, relative to this config's directory.
    pub problem: PathBuf,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Number of leading paths exported to `ensemble.csv`.
    #[serde(default = "default_csv_paths")]
    pub csv_paths: usize,
    #[serde(default)]
    pub picard: PicardSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    /// Coupling strengths for `compare` (scales every off-diagonal block).
    #[serde(default)]
    pub sweep: Vec<f64>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("run config {}: {e}", path.display())))?;
        config.base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.n_paths < 1 {
            return Err(CliError::usage("n_paths must be at least 1"));
        }
        if !(self.picard.damping > 0.0 && self.picard.damping <= 1.0) {
            return Err(CliError::usage(format!(
                "picard.damping must lie in (0, 1], got {}",
                self.picard.damping
            )));
        }
        if self.picard.max_iter == 0 {
            return Err(CliError::usage("picard.max_iter must be at least 1"));
        }
        if !self.problem_path().is_file() {
            return Err(CliError::usage(format!(
                "problem file {} does not exist",
                self.problem_path().display()
            )));
        }
        Ok(())
    }

    pub fn problem_path(&self) -> PathBuf {
        if self.problem.is_absolute() {
            self.problem.clone()
        } else {
            self.base_dir.join(&self.problem)
        }
    }

    pub fn picard_options(&self) -> PicardOptions64 {
        PicardOptions64 {
            max_iter: self.picard.max_iter,
            tol: self.picard.tol,
            damping: self.picard.damping,
        }
    }

    pub fn load_problem(&self) -> Result<LoadedProblem<f64>, CliError> {
        let path = self.problem_path();
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(ProblemFile::from_json(&text)?.build::<f64>()?)
    }
}
